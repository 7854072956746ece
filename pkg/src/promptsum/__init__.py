"""promptsum: prompt-controlled summarization research toolkit.

Annotates document-summary corpora with five control signals (length bin,
abstractiveness bin, sentence count, keywords, typed entities), renders
control and latent prompts, trains a small encoder-decoder model with a
dual-prompt contrastive objective, and evaluates both generation quality
(ROUGE) and control fidelity (MAD, recall, bin compliance).
"""

from .corpus import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    UNK_ID,
    Document,
    Example,
    Vocab,
    build_vocab,
    load_corpus,
    save_corpus,
    segment_sentences,
    tokenize,
)
from .evaluate import (
    EvalReport,
    bin_compliance,
    control_recall,
    control_sweep,
    mad,
    realized_attributes,
    rouge_report,
)
from .objective import (
    LOSS_PRESETS,
    LossBreakdown,
    LossWeights,
    dual_prompt_loss,
    kl_contrastive,
    multi_control_loss,
    nll,
)
from .prompts import ControlKind, Prompt, build_input, render_prompt
from .rouge import RougeScore, limited_length_recall, rouge_l, rouge_n
from .seqmodel import (
    ModelConfig,
    beam_decode,
    forward,
    backward,
    greedy_decode,
    init_parameters,
)
from .signals import (
    AnnotatedExample,
    ControlSignals,
    DictionaryTagger,
    EntityTagger,
    OracleSelection,
    abstractiveness,
    annotate_corpus,
    annotate_example,
    count_sentences,
    extract_entities,
    extract_keywords,
    extractive_oracle,
    length_bin,
    sample_control_subset,
)
from .trainer import (
    TrainConfig,
    TrainState,
    init_train_state,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train,
    train_step,
)

__version__ = "0.1.0"
