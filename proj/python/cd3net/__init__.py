"""Echo cancellation and speech enhancement with pseudocomplex dense networks."""

from ._cd3net import (
    DataError,
    Error,
    InvalidArgument,
    Model,
    NotFound,
    NumericalError,
    apply_dual_mask,
    apply_single_mask,
    double_precision,
    fft_size,
    generate_scenes,
    hop,
    istft,
    lr_trace,
    make_scene,
    neg_sd_sdr,
    oracle_echo_mask,
    param_count,
    perceptual_loss,
    random_scene,
    read_wav,
    sample_rate,
    sd_sdr,
    sdr,
    si_sdr,
    sqrt_hann,
    stack_inputs,
    stft,
    write_wav,
)

__all__ = [name for name in dir() if not name.startswith("_")]
