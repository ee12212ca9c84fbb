from .gradcheck import GradCheckReport, grad_check, relative_error
from .optim import (
    PRETRAIN_SCHEDULE,
    SED_SCHEDULE,
    SER_SCHEDULE,
    ST_SCHEDULE,
    AdamState,
    ScheduleConfig,
    adam_step,
    lr_at_step,
)
from .tensor import (
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    abs_,
    add,
    as_tensor,
    backward,
    concat,
    conv1d,
    conv_output_length,
    div,
    dropout,
    embedding,
    exp,
    layer_norm,
    linear,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    pad_axis,
    relu,
    reshape,
    slice_,
    softmax,
    sub,
    sum_,
    transpose,
    zero_grads,
)
