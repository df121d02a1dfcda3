from enum import unique

from hyperfanout._constants._enum import ModeEnum


@unique
class ScoreKind(ModeEnum):
    """Kinds of bucket-score functions."""

    P_FANOUT = "p-fanout"
    RECURSIVE_APPROX = "recursive-approx"
    EXACT_FANOUT = "exact-fanout"


@unique
class MoveMode(ModeEnum):
    """How the master's move directives are turned into moves."""

    EXACT_QUOTA = "exact-quota"
    PROBABILISTIC = "probabilistic"


@unique
class PartitionMode(ModeEnum):
    """Direct k-way or recursive r-ary partitioning."""

    DIRECT = "direct"
    RECURSIVE = "recursive"


@unique
class InputFormat(ModeEnum):
    """Supported hypergraph input formats."""

    HMETIS = "hmetis"
    EDGE_LIST = "edge-list"
    SNAP = "snap"


@unique
class IdType(ModeEnum):
    """How identifiers in edge-list files are parsed."""

    INT = "int"
    STR = "str"


@unique
class HmetisKeys(ModeEnum):
    """Tokens of the *hMetis* hypergraph format."""

    COMMENT = "%"
    # fmt codes with hyperedge and/or vertex weights
    FMT_UNWEIGHTED = "0"
    FMT_EDGE_WEIGHTS = "1"
    FMT_VERTEX_WEIGHTS = "10"
    FMT_BOTH_WEIGHTS = "11"


@unique
class SnapKeys(ModeEnum):
    """Tokens of *SNAP* edge-list files."""

    COMMENT = "#"


@unique
class PartitionKeys(ModeEnum):
    """Tokens of partition files."""

    COMMENT = "#"
    # header comment holding the number of buckets, e.g. `# k=8`
    K_HEADER = "# k="


@unique
class TraceKeys(ModeEnum):
    """Columns of the per-iteration trace CSV."""

    LEVEL = "level"
    ITERATION = "iteration"
    OBJECTIVE = "objective"
    EXACT_FANOUT = "exactFanout"
    MOVED_FRACTION = "movedFraction"
    PHASE2_PAYLOAD = "phase2Payload"
    ELAPSED_MS = "elapsedMs"


@unique
class ReportKeys(ModeEnum):
    """Fields of the JSON metrics report."""

    K = "k"
    P = "p"
    NUM_QUERIES = "numQueries"
    NUM_DATA = "numData"
    NUM_EDGES = "numEdges"
    AVERAGE_FANOUT = "averageFanout"
    P_FANOUT = "pFanout"
    SOED = "soed"
    WEIGHTED_EDGE_CUT = "weightedEdgeCut"
    HYPEREDGE_CUT = "hyperedgeCut"
    MAX_IMBALANCE = "maxImbalance"
    BUCKET_SIZES = "bucketSizes"


@unique
class BenchKeys(ModeEnum):
    """Columns of the benchmark CSV, in addition to the report fields."""

    INSTANCE = "instance"
    MODE = "mode"
    SEED = "seed"
    ITERATIONS = "iterations"
    ELAPSED_MS = "elapsedMs"


class Defaults:
    """Default parameters of a partition run."""

    P = 0.5
    EPSILON = 0.05
    ARITY = 2
    MAX_ITERATIONS_DIRECT = 60
    MAX_ITERATIONS_PER_LEVEL = 20
    CONVERGED_MOVE_FRACTION = 1e-4
    PENALTY = 0.0
    SEED = 0
    WORKERS = 1
    MOVE_MODE = MoveMode.EXACT_QUOTA
    # smallest gain magnitude that is not binned as zero
    UNIT_GAIN = 1e-9
    MAX_BIN_EXPONENT = 64
    # (1-p)^n below this is flushed to zero
    POWER_FLOOR = 1e-300
