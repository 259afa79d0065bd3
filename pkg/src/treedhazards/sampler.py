"""Reversible-jump MCMC over trees with parallel tempering.

Each chain targets ``log pi(T) + t * sum(log marginal of each leaf)``.  The
moves are grow, prune, change and swap; the chosen move kind is drawn from
the configured probabilities renormalized over the moves available on the
current tree.  Every ``swap_interval`` iterations one uniformly chosen pair
of adjacent chains proposes to exchange trees.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import BinGrid, BinnedTimes, NormalizedDataset, SurvivalDataset, normalize_times
from .errors import ConfigError, NumericalError
from .node_model import LENGTH_SCALE, TAU_SCALE, LeafFit, empirical_bayes
from .tree import (LEAF, ContinuousRule, Node, NodeRules, Tree, TreePriorParams, node_log_prior,
                   split_node)

log = logging.getLogger(__name__)

MOVES = ("grow", "prune", "change", "swap")


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class MoveConfig:
    p_grow: float = 0.25
    p_prune: float = 0.25
    p_change: float = 0.25
    p_swap: float = 0.25
    p_adjacent: float = 0.75

    def __post_init__(self):
        probs = (self.p_grow, self.p_prune, self.p_change, self.p_swap, self.p_adjacent)
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise ConfigError("move probabilities must lie in [0, 1]")
        if abs(sum(probs[:4]) - 1.0) > 1e-9:
            raise ConfigError("p_grow + p_prune + p_change + p_swap must equal 1")

    def weights(self) -> dict:
        return {"grow": self.p_grow, "prune": self.p_prune, "change": self.p_change,
                "swap": self.p_swap}

    def renormalized(self, available) -> dict:
        """Move probabilities restricted to ``available`` kinds, summing to 1.

        Returns an empty dict when no move with positive weight is available.
        """
        w = {k: p for k, p in self.weights().items() if k in available and p > 0}
        total = sum(w.values())
        return {k: p / total for k, p in w.items()} if total > 0 else {}


@dataclass(frozen=True)
class TemperatureLadder:
    temperatures: tuple
    swap_interval: int = 10

    def __post_init__(self):
        t = self.temperatures
        if len(t) < 1 or t[0] != 1.0:
            raise ConfigError("the ladder must start at inverse temperature 1")
        if any(a <= b for a, b in zip(t, t[1:])) or t[-1] <= 0:
            raise ConfigError("inverse temperatures must be strictly decreasing and positive")
        if int(self.swap_interval) != self.swap_interval or self.swap_interval < 1:
            raise ConfigError("swap_interval must be a positive integer")

    @property
    def d(self) -> int:
        return len(self.temperatures)


LADDER_STEEPNESS = 4.0


def build_ladder(d: int, t_min: float, swap_interval: int = 10) -> TemperatureLadder:
    """Sigmoidal ladder from 1 down to ``t_min`` over ``d`` chains.

    ``u_j = logistic(4 (1/2 - (j-1)/(d-1)))``, rescaled so that ``u_1 = 1`` and
    ``u_d = 0``; then ``t_j = t_min + (1 - t_min) u_j``.
    """
    if int(d) != d or d < 1:
        raise ConfigError("the ladder needs at least one chain")
    if not 0.0 < t_min <= 1.0:
        raise ConfigError("t_min must lie in (0, 1]")
    if d == 1:
        return TemperatureLadder((1.0,), swap_interval)
    if t_min == 1.0:
        raise ConfigError("t_min = 1 gives equal temperatures; use a single chain")
    x = LADDER_STEEPNESS * (0.5 - np.arange(d) / (d - 1))
    u = 1.0 / (1.0 + np.exp(-x))
    u = (u - u[-1]) / (u[0] - u[-1])
    t = t_min + (1.0 - t_min) * u
    t[0], t[-1] = 1.0, t_min
    return TemperatureLadder(tuple(float(v) for v in t), swap_interval)


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 10_000
    burn_in: int | None = None  # default: 10% of iterations
    thin: int = 1
    chains: int = 8
    t_min: float = 0.1
    swap_interval: int = 10
    moves: MoveConfig = field(default_factory=MoveConfig)
    prior: TreePriorParams = field(default_factory=TreePriorParams)
    bins: int = 100
    tau_scale: float = TAU_SCALE
    length_scale: float = LENGTH_SCALE
    cache_size: int = 4096
    log_every: int = 0
    debug_check_every: int = 0

    def __post_init__(self):
        for name in ("iterations", "thin", "chains", "swap_interval", "bins", "cache_size"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.burn_in is not None and not (0 <= self.burn_in < self.iterations):
            raise ConfigError("burn_in must lie in [0, iterations)")
        if self.log_every < 0 or self.debug_check_every < 0:
            raise ConfigError("log_every and debug_check_every must be >= 0")
        if not (self.tau_scale > 0 and self.length_scale > 0):
            raise ConfigError("hyperprior scales must be positive")
        build_ladder(self.chains, self.t_min, self.swap_interval)

    @property
    def burn(self) -> int:
        return self.iterations // 10 if self.burn_in is None else self.burn_in

    def ladder(self) -> TemperatureLadder:
        return build_ladder(self.chains, self.t_min, self.swap_interval)


# -- model context and per-chain cache -----------------------------------------

class TreeModel:
    """Read-only data shared by all chains: covariates, binned times, prior settings."""

    def __init__(self, data: NormalizedDataset, grid: BinGrid, prior: TreePriorParams,
                 tau_scale: float = TAU_SCALE, length_scale: float = LENGTH_SCALE):
        self.data = data
        self.grid = grid
        self.prior = prior
        self.tau_scale = tau_scale
        self.length_scale = length_scale
        self.X = data.X
        self.kinds = data.dataset.kinds
        self.binned = BinnedTimes(data, grid)
        self.root_index = np.arange(data.n, dtype=np.int64)

    def fit(self, idx) -> LeafFit:
        return empirical_bayes(self.binned.stats(idx), self.grid.width, self.tau_scale,
                               self.length_scale)


class NodeEntry:
    """Everything determined by the rows reaching a node: available rules and the leaf fit."""

    __slots__ = ("idx", "rules", "_fit", "_error")

    def __init__(self, idx, rules: NodeRules):
        self.idx = idx
        self.rules = rules
        self._fit = None
        self._error = None

    def fit(self, model: TreeModel) -> LeafFit:
        if self._fit is None:
            if self._error is not None:
                raise self._error
            try:
                self._fit = model.fit(self.idx)
            except NumericalError as exc:
                self._error = exc
                raise
        return self._fit


class NodeCache:
    """Chain-local LRU map from a node's sorted row indices to its :class:`NodeEntry`."""

    def __init__(self, model: TreeModel, maxsize: int = 4096):
        self.model = model
        self.maxsize = maxsize
        self._store = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._store)

    def get(self, idx) -> NodeEntry:
        key = idx.tobytes()
        ent = self._store.get(key)
        if ent is not None:
            self._store.move_to_end(key)
            self.hits += 1
            return ent
        self.misses += 1
        m = self.model
        ent = NodeEntry(idx, NodeRules.from_rows(m.X[idx], m.kinds, m.prior.min_node_size))
        self.adopt(ent)
        return ent

    def adopt(self, ent: NodeEntry):
        self._store[ent.idx.tobytes()] = ent
        self._store.move_to_end(ent.idx.tobytes())
        while len(self._store) > self.maxsize:
            self._store.popitem(last=False)


# -- tree evaluation -------------------------------------------------------------

@dataclass(eq=False)
class TreeEval:
    """A tree together with its node entries, prior and leaf evidences."""

    tree: Tree
    nodes: dict
    log_prior: float
    leaf_log_marginals: dict
    _counts: dict | None = field(default=None, repr=False)

    @property
    def log_likelihood(self) -> float:
        return math.fsum(self.leaf_log_marginals.values())

    def log_target(self, t: float) -> float:
        return self.log_prior + t * self.log_likelihood

    @property
    def leaves(self) -> list:
        return self.tree.leaves()

    def leaf_fits(self, model: TreeModel) -> list:
        return [self.nodes[p].fit(model) for p in self.leaves]

    def growable(self) -> list:
        return [p for p in self.leaves if self.nodes[p].rules.m > 0]

    def prunable(self) -> list:
        return prunable_nodes(self.tree)

    def available_moves(self) -> dict:
        """Number of options per move kind on this tree (zero means unavailable)."""
        if self._counts is None:
            internal = self.tree.internal()
            self._counts = {"grow": len(self.growable()), "prune": len(self.prunable()),
                            "change": len(internal), "swap": len(swap_candidates(self.tree))}
        return self._counts


@dataclass(frozen=True)
class Invalid:
    reason: str


def prunable_nodes(tree: Tree) -> list:
    return [p for p, nd in tree.walk()
            if not nd.is_leaf and nd.left.is_leaf and nd.right.is_leaf]


def evaluate(model: TreeModel, cache: NodeCache, tree: Tree, base: TreeEval | None = None,
             changed: tuple = ()):
    """Evaluate ``tree``, reusing ``base`` outside the subtree at path ``changed``.

    Returns a :class:`TreeEval`, or :class:`Invalid` when a rule is not
    available at its node (zero prior mass) or a leaf fit fails.
    """
    if base is None:
        changed = ()
        nodes = {}
        start = model.root_index
    else:
        c = len(changed)
        nodes = {p: e for p, e in base.nodes.items() if p[:c] != changed}
        start = base.nodes[changed].idx
    X = model.X
    stack = [(changed, tree.get(changed), start)]
    while stack:
        path, node, idx = stack.pop()
        ent = cache.get(idx)
        nodes[path] = ent
        if node.is_leaf:
            continue
        if not ent.rules.contains(node.rule):
            return Invalid(f"rule {node.rule} unavailable at node {path}")
        mask = node.rule.goes_left(X[idx, node.rule.variable])
        stack.append((path + (1,), node.right, idx[~mask]))
        stack.append((path + (0,), node.left, idx[mask]))
    lp = 0.0
    lms = {}
    for path, node in tree.walk():
        ent = nodes[path]
        lp += node_log_prior(node, len(path), ent.rules, model.prior)
        if node.is_leaf:
            try:
                lms[path] = ent.fit(model).log_marginal
            except NumericalError as exc:
                log.warning("leaf fit failed at node %s: %s %s", path, exc, exc.diagnostics)
                return Invalid(f"leaf fit failed at node {path}")
    return TreeEval(tree, nodes, lp, lms)


# -- swap geometry ---------------------------------------------------------------

def swap_candidates(tree: Tree) -> list:
    """Parent-child swap options, each unordered pair counted once.

    ``("double", p)`` when both children of ``p`` are internal with identical
    rules (both children swap with the parent); otherwise ``("pair", p, s)``
    for each internal child on side ``s``.
    """
    out = []
    for path, nd in tree.walk():
        if nd.is_leaf:
            continue
        l, r = nd.left, nd.right
        if not l.is_leaf and not r.is_leaf and l.rule == r.rule:
            out.append(("double", path))
            continue
        for side, ch in ((0, l), (1, r)):
            if not ch.is_leaf:
                out.append(("pair", path, side))
    return out


def _same_continuous_variable(a, b) -> bool:
    return (isinstance(a, ContinuousRule) and isinstance(b, ContinuousRule)
            and a.variable == b.variable)


def apply_swap(tree: Tree, cand) -> Tree:
    """Tree obtained by applying one swap candidate.

    A parent and child splitting the same continuous variable are rotated
    instead of swapped: for a left child, ``A[B[c0, c1], O]`` becomes
    ``B[c0, A[c1, O]]`` (mirror image for a right child).  The leaf regions
    ``x <= b``, ``b < x <= a`` and ``x > a`` are unchanged, so the rotation
    never produces an empty node.
    """
    path = cand[1]
    par = tree.get(path)
    if cand[0] == "double":
        l, r = par.left, par.right
        new = Node(l.rule, Node(par.rule, l.left, r.left), Node(par.rule, l.right, r.right))
        return tree.replace(path, new)
    side = cand[2]
    ch = par.child(side)
    other = par.child(1 - side)
    if _same_continuous_variable(par.rule, ch.rule):
        if side == 0:
            new = Node(ch.rule, ch.left, Node(par.rule, ch.right, other))
        else:
            new = Node(ch.rule, Node(par.rule, other, ch.left), ch.right)
        return tree.replace(path, new)
    inner = Node(par.rule, ch.left, ch.right)
    new = Node(ch.rule, inner, other) if side == 0 else Node(ch.rule, other, inner)
    return tree.replace(path, new)


def swap_transition_count(tree: Tree, target: Tree) -> tuple[int, int]:
    """(number of candidates of ``tree`` leading to ``target``, total candidates)."""
    cands = swap_candidates(tree)
    return sum(apply_swap(tree, c) == target for c in cands), len(cands)


# -- chains and proposals -------------------------------------------------------

@dataclass
class MoveStats:
    proposed: int = 0
    accepted: int = 0
    invalid: int = 0


class ChainState:
    """One tempered chain: current tree evaluation, inverse temperature, RNG and cache."""

    def __init__(self, model: TreeModel, temperature: float, rng: np.random.Generator,
                 cache_size: int = 4096, tree: Tree | None = None):
        self.model = model
        self.temperature = float(temperature)
        self.rng = rng
        self.cache = NodeCache(model, cache_size)
        ev = evaluate(model, self.cache, Tree() if tree is None else tree)
        if isinstance(ev, Invalid):
            raise ConfigError(f"initial tree is invalid: {ev.reason}")
        self.current = ev
        self.log_target = ev.log_target(self.temperature)
        self.stats = {k: MoveStats() for k in MOVES}

    @property
    def tree(self) -> Tree:
        return self.current.tree

    def set_current(self, ev: TreeEval):
        self.current = ev
        self.log_target = ev.log_target(self.temperature)

    def recompute(self) -> float:
        """Tempered log target recomputed with a fresh cache."""
        ev = evaluate(self.model, NodeCache(self.model, self.cache.maxsize), self.tree)
        return ev.log_target(self.temperature)


@dataclass(frozen=True, eq=False)
class Proposal:
    new_tree: Tree
    log_q_forward: float
    log_q_reverse: float
    move_kind: str
    evaluation: TreeEval | None = None
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.evaluation is not None and math.isfinite(self.log_q_reverse)


def _log_move_prob(ev: TreeEval, moves: MoveConfig, kind: str) -> float:
    counts = ev.available_moves()
    p = moves.renormalized([k for k, c in counts.items() if c > 0]).get(kind, 0.0)
    return math.log(p) if p > 0 else -math.inf


def _finish(state: ChainState, kind, new_tree, log_fwd, changed, reverse_fn) -> Proposal:
    ev = evaluate(state.model, state.cache, new_tree, state.current, changed)
    if isinstance(ev, Invalid):
        return Proposal(new_tree, log_fwd, -math.inf, kind, None, ev.reason)
    return Proposal(new_tree, log_fwd, reverse_fn(ev), kind, ev)


def propose_grow(state: ChainState, rng: np.random.Generator, moves: MoveConfig) -> Proposal:
    cur = state.current
    growable = cur.growable()
    if not growable:
        raise ConfigError("grow proposed on a tree without growable leaves")
    path = growable[rng.integers(len(growable))]
    rules = cur.nodes[path].rules
    rule = rules.draw(rng)
    new_tree = cur.tree.replace(path, split_node(rule))
    log_fwd = _log_move_prob(cur, moves, "grow") - math.log(len(growable)) + rules.log_prob(rule)

    def reverse(ev):
        return _log_move_prob(ev, moves, "prune") - math.log(len(ev.prunable()))
    return _finish(state, "grow", new_tree, log_fwd, path, reverse)


def propose_prune(state: ChainState, rng: np.random.Generator, moves: MoveConfig) -> Proposal:
    cur = state.current
    cands = cur.prunable()
    if not cands:
        raise ConfigError("prune proposed on a tree without prunable nodes")
    path = cands[rng.integers(len(cands))]
    rule = cur.tree.get(path).rule
    rules = cur.nodes[path].rules
    new_tree = cur.tree.replace(path, LEAF)
    log_fwd = _log_move_prob(cur, moves, "prune") - math.log(len(cands))

    def reverse(ev):
        return (_log_move_prob(ev, moves, "grow") - math.log(len(ev.growable()))
                + rules.log_prob(rule))
    return _finish(state, "prune", new_tree, log_fwd, path, reverse)


def change_log_density(rules: NodeRules, old, new, p_adjacent: float) -> float:
    """log q(old -> new) for the change move at a node with rule set ``rules``.

    Continuous rules move to a uniformly chosen adjacent threshold with
    probability ``p_adjacent`` and otherwise redraw from the rule prior;
    categorical rules always redraw from the prior.
    """
    prior = math.exp(rules.log_prob(new))
    if not isinstance(old, ContinuousRule):
        q = prior
    else:
        nbrs = rules.neighbors(old)
        adj = nbrs.count(new) / len(nbrs) if nbrs else 0.0
        q = p_adjacent * adj + (1.0 - p_adjacent) * prior
    return math.log(q) if q > 0 else -math.inf


def propose_change(state: ChainState, rng: np.random.Generator, moves: MoveConfig) -> Proposal:
    cur = state.current
    internal = cur.tree.internal()
    if not internal:
        raise ConfigError("change proposed on the root-only tree")
    path = internal[rng.integers(len(internal))]
    node = cur.tree.get(path)
    rules = cur.nodes[path].rules
    old = node.rule
    if isinstance(old, ContinuousRule) and rng.random() < moves.p_adjacent:
        nbrs = rules.neighbors(old)
        new = nbrs[rng.integers(len(nbrs))]
    else:
        new = rules.draw(rng)
    new_tree = cur.tree.replace(path, Node(new, node.left, node.right))
    log_fwd = (_log_move_prob(cur, moves, "change") - math.log(len(internal))
               + change_log_density(rules, old, new, moves.p_adjacent))

    def reverse(ev):
        return (_log_move_prob(ev, moves, "change") - math.log(len(ev.tree.internal()))
                + change_log_density(rules, new, old, moves.p_adjacent))
    return _finish(state, "change", new_tree, log_fwd, path, reverse)


def propose_swap(state: ChainState, rng: np.random.Generator, moves: MoveConfig) -> Proposal:
    cur = state.current
    cands = swap_candidates(cur.tree)
    if not cands:
        raise ConfigError("swap proposed on a tree without parent-child pairs")
    cand = cands[rng.integers(len(cands))]
    new_tree = apply_swap(cur.tree, cand)
    hits = sum(apply_swap(cur.tree, c) == new_tree for c in cands)
    log_fwd = _log_move_prob(cur, moves, "swap") + math.log(hits) - math.log(len(cands))

    def reverse(ev):
        back, total = swap_transition_count(new_tree, cur.tree)
        if back == 0:
            return -math.inf
        return _log_move_prob(ev, moves, "swap") + math.log(back) - math.log(total)
    return _finish(state, "swap", new_tree, log_fwd, cand[1], reverse)


PROPOSERS = {"grow": propose_grow, "prune": propose_prune, "change": propose_change,
             "swap": propose_swap}


def choose_move(ev: TreeEval, moves: MoveConfig, rng: np.random.Generator) -> str | None:
    counts = ev.available_moves()
    probs = moves.renormalized([k for k, c in counts.items() if c > 0])
    if not probs:
        return None
    u = rng.random()
    acc = 0.0
    kinds = [k for k in MOVES if k in probs]
    for k in kinds:
        acc += probs[k]
        if u < acc:
            return k
    return kinds[-1]


def mh_step(state: ChainState, moves: MoveConfig, rng: np.random.Generator | None = None) -> ChainState:
    """One Metropolis-Hastings update of ``state`` in place; returns ``state``."""
    rng = state.rng if rng is None else rng
    kind = choose_move(state.current, moves, rng)
    if kind is None:
        return state
    prop = PROPOSERS[kind](state, rng, moves)
    st = state.stats[kind]
    st.proposed += 1
    if not prop.valid:
        st.invalid += 1
        return state
    new_target = prop.evaluation.log_target(state.temperature)
    log_alpha = new_target - state.log_target + prop.log_q_reverse - prop.log_q_forward
    if log_alpha >= 0 or math.log(rng.random()) < log_alpha:
        state.set_current(prop.evaluation)
        st.accepted += 1
    return state


def pt_log_alpha(t_lo: float, t_hi: float, L_lo: float, L_hi: float) -> float:
    """log acceptance of exchanging trees between chains at ``t_lo`` and ``t_hi``.

    ``L_*`` are the summed leaf log marginals of each chain's current tree.
    """
    return (t_hi - t_lo) * (L_lo - L_hi)


def pt_swap(lo: ChainState, hi: ChainState, rng: np.random.Generator) -> bool:
    """Propose exchanging the trees of adjacent chains; returns whether it happened.

    ``lo`` is chain j-1 (higher inverse temperature) and ``hi`` chain j.
    """
    la = pt_log_alpha(lo.temperature, hi.temperature, lo.current.log_likelihood,
                      hi.current.log_likelihood)
    if not (la >= 0 or math.log(rng.random()) < la):
        return False
    a, b = lo.current, hi.current
    for ent in b.nodes.values():
        lo.cache.adopt(ent)
    for ent in a.nodes.values():
        hi.cache.adopt(ent)
    lo.set_current(b)
    hi.set_current(a)
    return True


# -- driver --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Sample:
    iteration: int
    tree: Tree
    log_prior: float
    log_likelihood: float
    leaf_fits: tuple

    @property
    def log_posterior(self) -> float:
        return self.log_prior + self.log_likelihood

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_fits)


@dataclass(eq=False)
class RunResult:
    samples: list
    model: TreeModel
    config: SamplerConfig
    ladder: TemperatureLadder
    move_stats: list  # per chain: {kind: MoveStats}
    swaps_proposed: int
    swaps_accepted: int

    def acceptance_rates(self, chain: int = 0) -> dict:
        return {k: (s.accepted / s.proposed if s.proposed else float("nan"))
                for k, s in self.move_stats[chain].items()}


def chain_seeds(seed: int, d: int) -> tuple[list, np.random.Generator]:
    """Independent generators for ``d`` chains plus one coordinator stream."""
    children = np.random.SeedSequence(seed).spawn(d + 1)
    return [np.random.default_rng(c) for c in children[:d]], np.random.default_rng(children[d])


def _format_diag(it, chains, swaps, acc_swaps) -> str:
    c0 = chains[0]
    parts = [f"iter={it}"]
    for k in MOVES:
        s = c0.stats[k]
        parts.append(f"{k}_accept={s.accepted}/{s.proposed}")
    parts += [f"pt_accept={acc_swaps}/{swaps}", f"leaves={c0.tree.n_leaves}",
              f"log_post={c0.current.log_target(1.0):.6f}"]
    return " ".join(parts)


def run(data, config: SamplerConfig, rng_seed: int, threads: int = 1,
        init_tree: Tree | None = None) -> RunResult:
    """Run the tempered sampler and collect the inverse-temperature-1 chain.

    Parameters
    ----------
    data : SurvivalDataset or NormalizedDataset
        Raw datasets are normalized by their largest time.
    threads : int
        Worker threads used to advance chains between swap points.  The
        output does not depend on it.
    """
    if isinstance(data, SurvivalDataset):
        data = normalize_times(data)
    if int(threads) != threads or threads < 1:
        raise ConfigError("threads must be a positive integer")
    ladder = config.ladder()
    model = TreeModel(data, BinGrid(config.bins), config.prior, config.tau_scale,
                      config.length_scale)
    rngs, coord = chain_seeds(rng_seed, ladder.d)
    chains = [ChainState(model, t, r, config.cache_size, init_tree)
              for t, r in zip(ladder.temperatures, rngs)]
    moves = config.moves
    burn, thin = config.burn, config.thin
    samples = []
    swaps = acc_swaps = 0

    def record(it):
        if it > burn and (it - burn) % thin == 0:
            ev = chains[0].current
            samples.append(Sample(it, ev.tree, ev.log_prior, ev.log_likelihood,
                                  tuple(ev.leaf_fits(model))))

    def advance(chain, steps, start, collect):
        snaps = []
        for s in range(steps):
            mh_step(chain, moves)
            if collect:
                snaps.append((start + s + 1, chain.current))
        return snaps

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        it = 0
        while it < config.iterations:
            steps = min(ladder.swap_interval, config.iterations - it)
            if pool is None:
                results = [advance(c, steps, it, j == 0) for j, c in enumerate(chains)]
            else:
                futs = [pool.submit(advance, c, steps, it, j == 0) for j, c in enumerate(chains)]
                results = [f.result() for f in futs]
            snaps = results[0]
            it += steps
            for i, ev in snaps[:-1]:
                if i > burn and (i - burn) % thin == 0:
                    samples.append(Sample(i, ev.tree, ev.log_prior, ev.log_likelihood,
                                          tuple(ev.leaf_fits(model))))
            if ladder.d > 1 and it % ladder.swap_interval == 0:
                j = int(coord.integers(1, ladder.d))
                swaps += 1
                acc_swaps += pt_swap(chains[j - 1], chains[j], coord)
            record(it)
            if config.debug_check_every and it % config.debug_check_every < steps:
                for c in chains:
                    fresh = c.recompute()
                    if abs(fresh - c.log_target) > 1e-9 * max(1.0, abs(fresh)):
                        raise NumericalError("cached log target drifted", cached=c.log_target,
                                             recomputed=fresh, iteration=it)
            if config.log_every and it % config.log_every < steps:
                log.info(_format_diag(it, chains, swaps, acc_swaps))
    finally:
        if pool is not None:
            pool.shutdown()
    return RunResult(samples, model, config, ladder, [c.stats for c in chains], swaps, acc_swaps)
