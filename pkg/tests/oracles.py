"""Frozen reference values for the built-in problem (kappa = 0.9, s = 4).

Computed once with tensor Gauss-Legendre quadrature in y (nodes 8, 7, 6, 5)
and the direct solver; limits by Richardson extrapolation in h^2 and h^4.
Regenerate with ``multiindex_qmc.reference`` if the discretisation changes.
"""

# E[P_(l,...,l)] on isotropic grids
FULL = {
    1: {2: 0.07944324432957021, 3: 0.08329474044314975, 4: 0.08427252836518653,
        5: 0.08451758888858947, 6: 0.08457888990765924, 7: 0.08459421737147146,
        8: 0.08459804937497592},
    2: {2: 0.029111974133615014, 3: 0.033713003956857994, 4: 0.03499482835737604,
        5: 0.03532599014126535, 6: 0.03540959972641761, 7: 0.03543056260197139,
        8: 0.035435807679333686},
}

# E[combination value at level L], d = 2 (in d = 1 it equals FULL)
COMBINATION_2D = {
    2: 0.0323899278982802, 3: 0.04700080435291966, 4: 0.0329611841900813,
    5: 0.034477306691699974, 6: 0.035105992514332884, 7: 0.0353294838355184,
    8: 0.035403631655541584, 9: 0.03542719125868116,
}

# E[P] in the continuum limit; the last digits are uncertain at ~1e-13 (d=1)
# and ~5e-10 (d=2, one- and two-step extrapolation from levels 6..8 agree to 4e-10)
EXPECTED_P = {1: 0.08459932672169, 2: 0.0354375564}
