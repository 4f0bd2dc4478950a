from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

Mode = Literal["bidirectional", "l2r", "r2l"]
Search = Literal["beam", "greedy"]
Task = Literal["copy", "reverse", "sort"]
DevMetric = Literal["exact_match", "bleu"]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    def replace(self, **changes):
        """Return a re-validated copy with ``changes`` applied."""
        data = self.model_dump()
        data.update(changes)
        return type(self).model_validate(data)


# Model Schemas
class ModelConfig(_Frozen):
    layers: int = Field(2, ge=1)
    d_model: int = Field(64, ge=2)
    heads: int = Field(4, ge=1)
    d_ff: int = Field(256, ge=1)
    vocab_size: int = Field(64, ge=7)
    lam: float = Field(0.5, ge=0.0, le=1.0, alias="lambda")
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    max_positions: int = Field(256, ge=3)
    mode: Mode = "bidirectional"

    @model_validator(mode="after")
    def _heads_divide_width(self):
        if self.d_model % self.heads != 0:
            raise ValueError(f"heads={self.heads} must divide d_model={self.d_model}")
        return self

    @property
    def bidirectional(self) -> bool:
        return self.mode == "bidirectional"

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads


# Training Schemas
class TrainHyper(_Frozen):
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.998, gt=0.0, lt=1.0)
    adam_eps: float = Field(1e-9, gt=0.0)
    warmup_steps: int = Field(400, ge=1)
    label_smoothing: float = Field(0.1, ge=0.0, lt=1.0)
    lr_scale: float = Field(1.0, gt=0.0)
    grad_clip: float = Field(1.0, gt=0.0)
    batch_size: int = Field(32, ge=1)
    max_steps: int = Field(3000, ge=1)
    seed: int = 1
    log_interval: int = Field(50, ge=1)
    eval_interval: int = Field(250, ge=1)
    dev_metric: DevMetric = "exact_match"
    dev_limit: int = Field(200, ge=1)


# Decoding Schemas
class DecodeConfig(_Frozen):
    beam_size: int = Field(4, ge=1)
    length_penalty: float = Field(0.6, ge=0.0, alias="alpha")
    max_len: int = Field(64, ge=2)
    search: Search = "greedy"


class PathConfig(_Frozen):
    train_path: Optional[Path] = None
    dev_path: Optional[Path] = None
    test_path: Optional[Path] = None
    vocab_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None
    log_path: Optional[Path] = None
    data_dir: Optional[Path] = None


class DataConfig(_Frozen):
    task: Task = "copy"
    count: int = Field(5000, ge=1)
    dev_count: int = Field(200, ge=1)
    test_count: int = Field(500, ge=1)
    min_length: int = Field(2, ge=1)
    max_length: int = Field(16, ge=1)
    vocab_real: int = Field(16, ge=1)
    max_vocab_size: int = Field(10000, ge=7)

    @model_validator(mode="after")
    def _length_range(self):
        if self.min_length > self.max_length:
            raise ValueError(f"min_length={self.min_length} exceeds max_length={self.max_length}")
        return self


class RunConfig(_Frozen):
    seed: int = 1
    model: ModelConfig = ModelConfig()
    train: TrainHyper = TrainHyper()
    decode: DecodeConfig = DecodeConfig()
    data: DataConfig = DataConfig()
    paths: PathConfig = PathConfig()

    @model_validator(mode="before")
    @classmethod
    def _single_seed(cls, values):
        # one seed drives init, data, null-side draws and dropout
        if isinstance(values, dict) and "seed" in values:
            train = values.get("train") or {}
            if isinstance(train, BaseModel):
                train = train.model_dump()
            values = {**values, "train": {**train, "seed": values["seed"]}}
        return values

    @model_validator(mode="after")
    def _positions_fit_data(self):
        if self.data.max_length > self.model.max_positions - 2:
            raise ValueError(
                f"max_length={self.data.max_length} needs max_positions >= {self.data.max_length + 2}"
            )
        return self


# Evaluation Schemas
class BucketRow(BaseModel):
    system: str = "hyp"
    lower: int
    upper: int
    count: int
    bleu: float
    mean_hyp_len: float
    mean_ref_len: float


class ModelSpeed(BaseModel):
    name: str
    mode: Mode
    search: Search
    sentences: int
    median_seconds: float
    sentences_per_sec: float
    tokens_per_sec: float
    mean_steps: float
    steps: List[int] = []
    output_lengths: List[int] = []
    sentence_seconds: List[float] = []
    bleu: Optional[float] = None
    exact_match: Optional[float] = None


class EvalReport(BaseModel):
    bleu: Optional[float] = None
    exact_match: Optional[float] = None
    sentences: int = 0
    buckets: List[BucketRow] = []
    speeds: List[ModelSpeed] = []
    baseline: Optional[str] = None
    speedup: Optional[float] = None
    setting: str = "batch-1 CPU latency (desk-scale substitute)"

    def speed(self, name: str) -> ModelSpeed:
        for row in self.speeds:
            if row.name == name:
                return row
        raise KeyError(name)
