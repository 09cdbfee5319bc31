from .labels import LabelMap, label_vector
from .records import (
    Corpus,
    EcgRecord,
    Header,
    HeaderError,
    RawSignal,
    format_header,
    load_corpus,
    load_record,
    parse_header,
    read_native,
    write_native,
)
from .split import SplitPlan, kfold, make_split_plan, split_sizes, stratified_split
from .synth import synth_generate

__all__ = [
    "Corpus",
    "EcgRecord",
    "Header",
    "HeaderError",
    "LabelMap",
    "RawSignal",
    "SplitPlan",
    "format_header",
    "kfold",
    "label_vector",
    "load_corpus",
    "load_record",
    "make_split_plan",
    "parse_header",
    "read_native",
    "split_sizes",
    "stratified_split",
    "synth_generate",
    "write_native",
]
