"""Word-free region recognition core.

A numpy library implementing region tokenization over binary masks, cascade
attention-mask construction for decoupled multi-instance decoding, a toy
transformer decoder with exact masked-key exclusion, open-vocabulary label
metrics, a dataset filter pipeline, and an analytic cost benchmark.
"""

from .attnmask import (
    AttentionMaskMatrix,
    CascadeConfig,
    Segment,
    SequenceLayout,
    build_cascade_mask,
    canonical_layout,
    dump_attention_mask,
    extend_for_decode,
    parse_layout_header,
    to_additive,
)
from .decoder import (
    DecodeResult,
    DecoderParams,
    TokenSequence,
    assemble_sequence,
    decode_objects,
    forward,
    isolate_single_mask,
    joint_logprob,
    load_decoder_params,
    make_vocab,
    save_decoder_params,
    teacher_forced_loss,
)
from .encoder import EncoderParams, FeatureGrid, encode, load_encoder_params, save_encoder_params
from .harness import (
    AlwaysYesOracle,
    CostModel,
    PipelineReport,
    ScalingReport,
    ScriptedOracle,
    estimate_cost,
    run_filter_pipeline,
    run_scaling_bench,
    synthesize_mask_corpus,
)
from .maskio import (
    BinaryMask,
    MaskRecord,
    RasterImage,
    area_ratio_filter,
    mask_from_rle,
    mask_to_rle,
    read_pgm,
    read_records,
    write_pgm,
    write_records,
)
from .metrics import (
    EvalReport,
    TableProvider,
    TrigramHashProvider,
    evaluate,
    open_vocab_classify,
    semantic_iou,
    semantic_similarity,
)
from .prompt import (
    MaskTokenSet,
    PromptBatch,
    SequenceBudget,
    build_prompt_batch,
    mask2token,
    token_budget,
)
from .region import (
    BBox,
    CropWindow,
    GridMask,
    bounding_ellipse_mask,
    context_crop_window,
    downsample_to_grid,
    extract_and_resize,
    render_blur2token,
    render_fore2token,
    resize_image,
    rotated_bbox_mask,
    tight_bbox,
)

__version__ = "0.1.0"
