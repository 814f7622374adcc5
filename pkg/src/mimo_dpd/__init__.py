"""Digital predistortion testbench for fully digital multi-antenna OFDM
downlinks: OFDM signal tooling, GMP power-amplifier banks with crosstalk,
MRT/ZF precoding over Rayleigh or LOS channels, four DPD schemes with their
trainers, linearity metrics, and per-sample FLOP cost models."""

__version__ = "0.1.0"

from .signals import (OfdmConfig, SignalGrid, SignalBlock, qam_constellation,
                      map_qam, random_symbols, build_grid, extract_data,
                      ofdm_modulate, ofdm_demodulate, estimate_psd)
from .channel import (PathlossParams, ChannelScenario, ChannelRealization,
                      sample_channel, apply_channel, apply_channel_td,
                      large_scale_fading)
from .precoding import (Precoder, mrt, zf, make_precoder, precode,
                        pathloss_inverse_weights)
from .pa import (GmpStructure, GmpModel, gmp_forward, gmp_regressor,
                 fit_gmp_ls, mag_clip, crosstalk_matrix, apply_crosstalk,
                 PaBank, pa_bank_forward, measure_gain, synth_pa_fixture,
                 static_am_curve, backoff_to_total_power, save_pa_records,
                 load_pa_records, FIXTURE_STRUCTURE)
from .dpd import (TdGmpDpd, FdGmpDpd, FdNnDpd, FdCnnDpd, ila_train,
                  ila_train_bank, train_fd_dpd, TrainConfig, TrainResult,
                  TrainingDiverged, mse_loss, save_dpd, load_dpd,
                  td_gmp_predistort, fd_gmp_predistort, fd_nn_predistort,
                  fd_cnn_predistort, smoothed)
from .metrics import (BandPlan, band_plan, evm, aclr, bin_powers,
                      far_field_pattern, beam_band_powers, trp_aclr, sll,
                      oob_victim_cdf, MetricsRecord, DEFAULT_ANGLES_DEG)
from .complexity import (gmp_flops_per_sample, td_gmp_flops, fd_gmp_flops,
                         fd_nn_flops, fd_cnn_flops, CostConfig, sweep,
                         branch_crossovers, published_discrepancies)
from .simulate import build_chain, run_chain, evaluate, make_probe, Chain
