"""Sub-supersolution machinery for nonlocal p(x)-Laplacian systems."""
