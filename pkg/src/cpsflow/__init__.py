"""Attacker controllability and process integrity for discrete cyber-physical models,
plus an LTI observer / residual detection stack."""

from .attacker import AttackerSpec, apply_attack, attacked_run, attacked_step, h_equal
from .errors import (BudgetExceeded, ConfigError, CpsError, DimensionMismatch, DomainViolation,
                     InvalidConfig, InvalidModel, NonConvergent, NonPositiveSigma,
                     UnknownComponent, UnstableObserver)
from .fixtures import FIXTURES, load_fixture
from .model import ComponentId, CpsModel, CpsState, Choice, IntRange, Kind, Trace, run, step
from .reach import (Budget, CriticalPredicate, check_integrity, controllability, corollary_check,
                    integrity_verdict, project, project_all, reach, replay_witness,
                    vulnerability_report)

__version__ = "0.1.0"
