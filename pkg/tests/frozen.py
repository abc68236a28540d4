"""Reference values frozen from the mpmath oracles in ``oracles.py``.

Regenerate with ``python tests/oracles.py``-style calls; ``test_oracles.py``
re-derives a subset on every run.
"""

# (x1, x2, C1, C2) for the buy-low/sell-high defaults a=0.8, b=2, sigma=0.5, rho=0.5, K=0.01
BUY_LOW = {
    0.0: (1.310917937475892, 1.6554016750274119, 0.02689857098528124, 4.424595199682471),
    0.1: (1.2666405156775864, 1.602095804403235, 0.01380521143460526, 4.139302511711226),
    0.2: (1.2203555876817993, 1.5473760965766419, 0.006569089133857827, 3.876228352308428),
    0.4: (1.1222004481109664, 1.4341748877101084, 0.0011630729255054915, 3.4070441188824705),
}

# (upper, lower) two-way fund thresholds for the default fund parameters, by kappa2
FUND = {
    0.0: (371337.261300019, 50.61555378635823),
    0.05: (28756129.323156726, 3442.1143606570827),
}

# int_0^inf t^(nu-1) exp(-t^2/2 + beta t) dt, keyed by (nu, beta)
GAUSSIAN_MOMENT = {
    (0.625, 0.0): 1.7796392111637565,
    (0.625, 3.0): 155.1652398819405,
    (1.625, -2.0): 0.20654747838472284,
    (0.2, 1.5): 9.74014168595075,
    (2.5, 8.0): 4504983379499202.0,
}
