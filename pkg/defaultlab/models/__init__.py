from .tree import Filtration, ScenarioTree
from .process import INF, AdaptedProcess, IncreasingProcess, Level, RandomTime, TimeLevel
from .claim import DefaultableClaim, RatesSpec, RecoveryDecomposition, DiscountMode
