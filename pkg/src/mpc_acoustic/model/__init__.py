from .config import ModelConfig
from .decoder import BOS, EOS, PAD, UNK, Hypothesis, beam_search, beam_search_core, decoder_forward, greedy_search
from .network import (
    EncoderOutput,
    conv_frontend,
    encode,
    encoded_length,
    encoder_forward,
    multi_head_attention,
    pad_to_multiple,
    pooling_head,
    reconstruction_head,
    sinusoidal_positions,
)
from .params import Params, init_params, is_encoder_param, load_encoder, shape_diff
