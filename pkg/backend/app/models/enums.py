from enum import Enum


class Player(str, Enum):
    X = "X"
    Y = "Y"


class NodeRole(int, Enum):
    INTERIOR = 0
    X_FACE = 1
    Y_FACE = 2
    CORNER = 3


class Convention(str, Enum):
    # LOWER: max over b of min over a (UH ordering), problem for the lower value
    LOWER = "LOWER"
    # UPPER: min over a of max over b, problem for the upper value
    UPPER = "UPPER"


class CostSplit(str, Enum):
    NONE = "none"
    # l1(x, y) + l2(a) + l3(b)
    STATE_CONTROL = "state_control"
    # l1(x, y, a) + l2(x, y, b)
    PLAYER = "player"


class ExitCase(str, Enum):
    X_ONLY = "X_ONLY"
    Y_ONLY = "Y_ONLY"
    SIMULTANEOUS = "SIMULTANEOUS"
    NEVER = "NEVER"


class StrategyKind(str, Enum):
    FEEDBACK = "FEEDBACK"
    TUNED = "TUNED"
    USER = "USER"


class EpsMode(str, Enum):
    GRONWALL_BOUND = "GRONWALL_BOUND"
    SAMPLED = "SAMPLED"


class ReportStatus(str, Enum):
    PASS = "PASS"
    WARN = "WARN"
    FAIL = "FAIL"


class Command(str, Enum):
    SOLVE = "SOLVE"
    SOLVE_BOTH = "SOLVE_BOTH"
    SIMULATE = "SIMULATE"
    VERIFY = "VERIFY"
    ORACLE = "ORACLE"
    SWEEP = "SWEEP"
