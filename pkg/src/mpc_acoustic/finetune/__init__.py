from .bpe import BOS_ID, EOS_ID, EOW, PAD_ID, SPECIALS, UNK_ID, TokenVocab, bpe_train
from .checkpoints import average_checkpoints, select_best_k
from .metrics import (
    BleuStats,
    EvalReport,
    bleu,
    bleu_tokenize,
    confusion_matrix,
    macro_f1,
    per_class_f1,
    per_class_recall,
    uar,
)
from .training import (
    LABEL_SMOOTHING,
    Seq2SeqBatch,
    TagBatch,
    cross_entropy,
    decode_all,
    evaluate_seq2seq,
    evaluate_tagging,
    finetune,
    finetune_loss,
    finetune_step,
    label_smoothed_ce,
    make_seq2seq_batch,
    make_tag_batch,
    pad_features,
    predict_classes,
)
