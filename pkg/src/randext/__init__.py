"""randext: randomness extraction and measure conversion with exact rate
instrumentation.

Block-map extractors (including the coin-unbiasing map and its iterated
family), discrete-distribution-generating tree samplers, and the interval
algorithm converting between computable measures, all instrumented to
measure output/input extraction rates against their exact or entropy-based
targets.
"""

from .bitseq import (
    ArrayStream,
    BitStream,
    BitString,
    EPSILON,
    FileStream,
    RatInterval,
    UNIT,
    as_stream,
    common_prefix,
    dyadic_interval,
    lex_rank,
    read_bits,
    write_bits,
)
from .blockmap import (
    BlockMap,
    block_rate,
    load_block_table,
    make_block_map,
    minimal_block_length,
    n_shift,
    peres,
    peres_expected_length,
    save_block_table,
    von_neumann,
)
from .ddg import (
    AvgRt,
    BaseDdgTree,
    DdgGenerator,
    DdgTree,
    ExtractResult,
    KnuthYaoTree,
    avg_rt,
    ddg_extract,
    knuth_yao,
    load_tree,
    make_ddg,
    save_tree,
    tree_from_config,
    tree_shift,
)
from .ergodic import (
    NShift,
    Observable,
    TreeShift,
    birkhoff_average,
    block_len_observable,
    block_oi_observable,
    constant_observable,
    mixing_average,
    mixing_threshold,
)
from .errors import ComputationError, RandextError, StallError, ValidationError
from .generators import (
    AlphaFunctional,
    Generator,
    IdentityGenerator,
    RateReport,
    alpha_functional,
    avg_oi,
    canonicalize,
    duplication,
    identity,
    oi_ratio,
    oscillating_alpha,
    rate_report,
    use_function,
)
from .levinkautz import (
    KautzReport,
    LkResult,
    LkState,
    g_of_prefix,
    kautz_check,
    lk_convert,
    lk_rate,
    lk_roundtrip,
    lk_step,
)
from .measures import (
    Bernoulli,
    Lebesgue,
    Markov,
    Measure,
    StepBernoulli,
    cylinder_mass,
    entropy_rate,
    measure_from_config,
    measure_interval,
    pattern_mass,
    positivity_delta,
    sample,
    smb_entropy_estimate,
)

__version__ = "0.1.0"
