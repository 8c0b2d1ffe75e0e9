"""Min-sum LDPC decoding with generalized simplified variable scaling (GSVS).

Modules: :mod:`.code` (parity-check matrices, encoding), :mod:`.channel`
(BPSK/QAM over AWGN), :mod:`.decoder` (SPA / min-sum family),
:mod:`.de` (density evolution), :mod:`.optimize` (Nelder-Mead design of
(alpha0, S)) and :mod:`.harness` (Monte-Carlo error rates).
"""

from .channel import ChannelModel, awgn, demap_llr, ebn0_to_sigma, modulate
from .code import (DegreeDistributions, ParityCheckMatrix, build_encoder, degree_distributions, encode,
                   generate_ira_code, generate_regular_code, load_alist, syndrome)
from .de import QuantizedPmf, de_ber, threshold_search
from .decoder import (GSVS, SVS, Constant, Decoder, DecoderConfig, NoScaling, TwoDim, decode, parse_schedule,
                      schedule_alpha)
from .harness import SimConfig, SimPoint, Simulator, run_curve, run_point
from .optimize import nelder_mead, optimize_schedule, snap_alpha0

__version__ = "0.1.0"
