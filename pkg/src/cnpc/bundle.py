"""Loading and cross-checking the artifacts one serving/eval session needs.

A bundle ties together a model, its compiled circuit, the parameter
binding, a trained predictor, and optionally a dataset. Digests are
verified on load (circuit against model, predictor against dataset), so a
mismatched file mix fails fast instead of producing silent nonsense.
Bundles are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .compiler import Circuit, parse_circuit
from .datagen import Dataset, read_dataset
from .fusion import FusionConfig
from .model import CausalModel, ModelError, parse_model
from .predictor import PredictorParams, load_predictor
from .runtime import ParamBinding


def load_params_model(model: CausalModel, params_path: str | Path | None) -> CausalModel:
    """Parameter values default to the model file's own CPDs; an optional
    separate file (same structure, different CPDs) can override them."""
    if params_path is None:
        return model
    other = parse_model(Path(params_path).read_text(encoding="utf-8"))
    if other.structure_digest() != model.structure_digest():
        raise ModelError("parameter file does not share the model's structure")
    return other


@dataclass(frozen=True)
class LoadedBundle:
    model: CausalModel
    circuit: Circuit
    params: ParamBinding
    predictor: PredictorParams
    predictor_meta: dict
    dataset: Dataset | None
    fusion: FusionConfig
    reveal_ground_truth: bool = False

    @property
    def attr_names(self) -> list[str]:
        return self.model.attributes


def load_bundle(
    model_path: str | Path,
    circuit_path: str | Path,
    predictor_path: str | Path,
    data_dir: str | Path | None = None,
    alpha: float = 0.9,
    reveal_ground_truth: bool = False,
    check_digests: bool = True,
    params_path: str | Path | None = None,
) -> LoadedBundle:
    model = parse_model(Path(model_path).read_text(encoding="utf-8"))
    circuit = parse_circuit(Path(circuit_path).read_text(encoding="utf-8"), model)
    params = ParamBinding.from_model(load_params_model(model, params_path))
    predictor, meta = load_predictor(predictor_path)

    heads = meta.get("heads", [])
    if [h["name"] for h in heads] != model.attributes:
        raise ModelError(
            f"predictor heads {[h['name'] for h in heads]} do not match "
            f"model attributes {model.attributes}"
        )
    if [h["card"] for h in heads] != [model.card(a) for a in model.attributes]:
        raise ModelError("predictor head widths do not match attribute cardinalities")

    dataset = None
    if data_dir is not None:
        dataset = read_dataset(data_dir)
        # the served model is typically the fitted one; it must share
        # structure with the dataset's generator model
        if dataset.model.structure_digest() != model.structure_digest():
            raise ModelError("dataset was generated from a different model (digest check)")
        if check_digests and meta.get("dataset_digest") not in (None, dataset.digest()):
            raise ModelError("predictor was trained on a different dataset (digest check)")
        if dataset.embeddings.shape[1] != predictor.input_dim:
            raise ModelError(
                f"embedding dim {dataset.embeddings.shape[1]} != predictor input "
                f"dim {predictor.input_dim}"
            )
    return LoadedBundle(
        model=model,
        circuit=circuit,
        params=params,
        predictor=predictor,
        predictor_meta=meta,
        dataset=dataset,
        fusion=FusionConfig(alpha=alpha),
        reveal_ground_truth=reveal_ground_truth,
    )
