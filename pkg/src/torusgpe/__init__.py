"""Ground states and dynamics of a cubic NLS in a thin toroidal trap, and
their reduction to the periodic 1D NLS on the circle."""
from .circle1d import CircleField, DnoidalGroundState, evolve1d, groundState1d, linearizedSpectrum1d
from .core3d import Field3D, Grid3D, Model3D, energyMod, factorized, massMod, project
from .dynamics3d import EvolveConfig, EvolutionTrace, evolve3d, reductionHarness
from .elliptic import completeE, completeK, invertMass, jacobi
from .errors import *  # noqa: F401,F403
from .minimizer3d import MinimizeConfig, MinimizerResult, coercivityCheck, minimize
from .potentials import PotentialSpec, checkHypotheses, evalU
from .transverse import RadialGrid, solveTransverse

__version__ = "0.1.0"
