"""Frozen oracle values.  Regenerate with ``python tests/oracles/laplace_quadrature.py``.

Rows are (K', n per bin, e per bin, tau, length, log evidence) on a grid with
spacing 0.01.  K'=1 values come from adaptive 1-d quadrature, K'=2 and 3 from a
mode-centered tensor Gauss-Hermite rule (40 nodes per axis; agrees with 2-d
adaptive quadrature to about 1e-15).
"""

DZ = 0.01

LAPLACE_TABLE = [
    (1, 1, 1.0, 0.5, None, -1.1148517442007055),
    (1, 1, 1.0, 1.0, None, -1.3514828821346527),
    (1, 1, 1.0, 2.0, None, -1.782697471465808),
    (1, 1, 2.0, 0.5, None, -2.0941212157435913),
    (1, 1, 2.0, 1.0, None, -2.2535806892121295),
    (1, 1, 2.0, 2.0, None, -2.5765310921972837),
    (1, 5, 1.0, 0.5, None, 0.29708746917007256),
    (1, 5, 1.0, 1.0, None, 1.218886446298217),
    (1, 5, 1.0, 2.0, None, 1.2686917879306296),
    (1, 5, 2.0, 0.5, None, -1.5847548442049242),
    (1, 5, 2.0, 1.0, None, -1.5876263139577032),
    (1, 5, 2.0, 2.0, None, -2.0059197177232715),
    (2, 1, 1.0, 0.5, 0.01, -2.2261718458975626),
    (2, 1, 1.0, 0.5, 0.1, -2.210054530419218),
    (2, 1, 1.0, 1.0, 0.01, -2.6814280588427595),
    (2, 1, 1.0, 1.0, 0.1, -2.5784211116472493),
    (2, 1, 1.0, 2.0, 0.01, -3.5169909597404923),
    (2, 1, 1.0, 2.0, 0.1, -3.2132347724313677),
    (2, 1, 2.0, 0.5, 0.01, -4.130780881688379),
    (2, 1, 2.0, 0.5, 0.1, -4.042496708807514),
    (2, 1, 2.0, 1.0, 0.01, -4.411857556828219),
    (2, 1, 2.0, 1.0, 0.1, -4.218173697936301),
    (2, 1, 2.0, 2.0, 0.01, -5.057751221881507),
    (2, 1, 2.0, 2.0, 0.1, -4.700845136360704),
    (2, 5, 1.0, 0.5, 0.01, 1.2465743569890535),
    (2, 5, 1.0, 0.5, 0.1, 2.011035473806231),
    (2, 5, 1.0, 1.0, 0.01, 2.9094560735344652),
    (2, 5, 1.0, 1.0, 0.1, 3.6042919716538293),
    (2, 5, 1.0, 2.0, 0.01, 2.7414556022062495),
    (2, 5, 1.0, 2.0, 0.1, 3.448737440741371),
    (2, 5, 2.0, 0.5, 0.01, -2.9230791554291295),
    (2, 5, 2.0, 0.5, 0.1, -2.5936220433374997),
    (2, 5, 2.0, 1.0, 0.01, -2.999302983926868),
    (2, 5, 2.0, 1.0, 0.1, -2.544587253806349),
    (2, 5, 2.0, 2.0, 0.01, -3.9061961839799126),
    (2, 5, 2.0, 2.0, 0.1, -3.2739285448756186),
    (3, 1, 1.0, 0.5, 0.01, -3.337129144120711),
    (3, 1, 1.0, 0.5, 0.1, -3.295526043426099),
    (3, 1, 1.0, 1.0, 0.01, -4.010397850047714),
    (3, 1, 1.0, 1.0, 0.1, -3.77416996580698),
    (3, 1, 1.0, 2.0, 0.01, -5.250752843091645),
    (3, 1, 1.0, 2.0, 0.1, -4.6039153432733535),
    (3, 1, 2.0, 0.5, 0.01, -6.155761436959629),
    (3, 1, 2.0, 0.5, 0.1, -5.933899729934773),
    (3, 1, 2.0, 1.0, 0.01, -6.56118865769849),
    (3, 1, 2.0, 1.0, 0.1, -6.132620308135088),
    (3, 1, 2.0, 2.0, 0.01, -7.53636566235199),
    (3, 1, 2.0, 2.0, 0.1, -6.78774676603611),
    (3, 5, 1.0, 0.5, 0.01, 2.32373025744535),
    (3, 5, 1.0, 0.5, 0.1, 4.215335432443171),
    (3, 5, 1.0, 1.0, 0.01, 4.626789585666778),
    (3, 5, 1.0, 1.0, 0.1, 6.1177868740326),
    (3, 5, 1.0, 2.0, 0.01, 4.216488230736389),
    (3, 5, 1.0, 2.0, 0.1, 5.651842474815969),
    (3, 5, 2.0, 0.5, 0.01, -4.221506986472659),
    (3, 5, 2.0, 0.5, 0.1, -3.4256822648587404),
    (3, 5, 2.0, 1.0, 0.01, -4.403046817406272),
    (3, 5, 2.0, 1.0, 0.1, -3.4327018635209243),
    (3, 5, 2.0, 2.0, 0.01, -5.805762216941179),
    (3, 5, 2.0, 2.0, 0.1, -4.5251964567683824),
]
