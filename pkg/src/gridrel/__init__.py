"""Composite power-system reliability assessment via Boolean-lattice
partition of the outage state space, with DC-OPF load shedding."""

from .assessment import (
    IndexReport,
    SampleAccumulator,
    fmcs_eens,
    lolp_from_partition,
    mcs,
    se_enumerate,
)
from .errors import (
    AssessmentError,
    GridRelError,
    MonotonicityError,
    OpfSolveError,
    SystemModelError,
)
from .lattice import (
    Lattice,
    LatticeClass,
    State,
    classify,
    lattice_probability,
    sample_state,
    split,
)
from .opf import EPS_SHED, DcOpf, OpfResult, solve_opf, structure
from .partition import (
    ImportanceIndex,
    PartitionLedger,
    StopCriteria,
    generation_weakness,
    importance,
    run_dichotomy,
    select_component,
    transmission_weakness,
)
from .system_model import (
    Bus,
    Component,
    Generator,
    Line,
    SystemModel,
    fixture_path,
    load_system,
    state_probability,
)

__version__ = "0.1.0"
