"""Baseband OFDM transceiver: coding, mapping, OFDM, LS estimation, frame chains."""
from .coding import coded_length, encode_bcc, viterbi_decode
from .link import (
    CRC_BITS, DEFAULT_INFO_BITS, Frame, RxResult, append_crc, check_crc, data_airtime,
    frame_length, n_data_symbols, receive_frame, run_frame_rx, run_frame_tx,
)
from .modulation import Modulation, constellation, demap_hard, demap_soft, map_symbols
from .ofdm import (
    LTF_VALUES, MCS_TABLE, CsiEstimate, McsEntry, OfdmConfig, build_mcs_table, equalize,
    estimate_csi_ls, ltf_grid, ofdm_demodulate, ofdm_modulate, preamble,
)

__all__ = [
    "CRC_BITS", "DEFAULT_INFO_BITS", "LTF_VALUES", "MCS_TABLE", "CsiEstimate", "Frame",
    "McsEntry", "Modulation", "OfdmConfig", "RxResult", "append_crc", "build_mcs_table",
    "check_crc", "coded_length", "constellation", "data_airtime", "demap_hard", "demap_soft",
    "encode_bcc", "equalize", "estimate_csi_ls", "frame_length", "ltf_grid", "map_symbols",
    "n_data_symbols", "ofdm_demodulate", "ofdm_modulate", "preamble", "receive_frame",
    "run_frame_rx", "run_frame_tx", "viterbi_decode",
]
