"""Cost of solving Laplace and mass problems in C0 and C^(p-1) B-spline spaces.

Modules
-------
bspline     knot vectors, basis evaluation, quadrature, knot insertion
space       3D tensor-product spaces, DOF numbering, sparsity patterns
assembly    stiffness/mass assembly, model-problem BCs, static condensation
sparsekit   CSR storage and FLOP-counting sparse kernels
precond     Jacobi, SSOR, ILU(0), EBE, BBB and two-grid preconditioners
krylov      preconditioned conjugate gradients
estimates   nonzero and FLOP cost models
cli         command-line experiment driver
"""

__version__ = "0.1.0"
