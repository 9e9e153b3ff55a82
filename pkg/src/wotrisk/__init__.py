"""Risk measures from optimal-transport penalties, with neural and pointwise solvers."""

from .costs import CostSpec, cost, cost_deriv
from .ctransform import (SearchConfig, bs_call, concave_envelope_1d, convex_envelope_1d,
                         ctrans_grid, ctrans_martingale, ctrans_parametric,
                         ctrans_unconstrained)
from .measures import (Dirac, DiffusionMarginal, Empirical, Gaussian, LogNormalBS,
                       make_measure, moment, sample)
from .moments import Instrument, MomentProblem, moment_bounds
from .neural import Mlp, NumericalAbort, TrainConfig, train
from .payoffs import (Affine, BasketCall, BullSpread, EarthquakeLoss, GeometricPut, MaxCall,
                      MinPut, Quadratic, check_growth, make_payoff)
from .risk import PriceBounds, bounds_curve, price_bounds, rho_network, rho_pointwise

__version__ = "0.1.0"
