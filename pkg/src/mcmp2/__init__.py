"""Monte Carlo second-order perturbation energies for 1-, 2- and 4-component spinors."""
from .model import Molecule, SpinorSet, load_spinor_set, parse_spinor_set, save_spinor_set
from .weights import WeightSpec

__version__ = "0.1.0"

__all__ = ["Molecule", "SpinorSet", "WeightSpec", "load_spinor_set", "parse_spinor_set",
           "save_spinor_set"]
