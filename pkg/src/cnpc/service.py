"""Stateless JSON-over-HTTP service for the intervention console.

Every request is answered from the immutable bundle loaded at startup;
intervention state lives entirely client-side, so identical requests give
identical responses and concurrent requests share nothing mutable.
"""

from __future__ import annotations

from typing import Any

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import fusion, runtime
from .bundle import LoadedBundle
from .model import InterventionSet, depth_order
from .predictor import clamp, forward


class InterventionBody(BaseModel):
    attribute: str
    value: str


class PredictBody(BaseModel):
    instance_id: int
    alpha: float | None = None
    interventions: list[InterventionBody] = []


def _as_list(a: np.ndarray) -> list[float]:
    return [float(x) for x in a]


def create_app(bundle: LoadedBundle, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="intervention console service")
    model = bundle.model
    attrs = model.attributes
    cards = [model.card(a) for a in attrs]
    order = depth_order(model)
    class_states = model.variable(model.class_variable).states
    class_table, _ = runtime.class_conditional_table(bundle.circuit, model, bundle.params)
    attr_table_cache: dict[tuple, np.ndarray] = {}

    def interventional_table(do: InterventionSet) -> np.ndarray:
        key = do.assignments
        if key not in attr_table_cache:
            attr_table_cache[key] = runtime.interventional_attr_table(
                bundle.circuit, model, bundle.params, do
            )
        return attr_table_cache[key]

    @app.get("/model")
    def get_model() -> dict[str, Any]:
        return {
            "variables": [
                {"name": v.name, "states": list(v.states), "role": v.role}
                for v in model.variables
            ],
            "edges": [[p, c] for p, c in model.edges],
            "class_variable": model.class_variable,
            "depth_order": order,
            "default_alpha": bundle.fusion.alpha,
        }

    @app.get("/instances")
    def get_instances(split: str = "test", offset: int = 0, limit: int = 20) -> dict[str, Any]:
        if bundle.dataset is None:
            raise HTTPException(status_code=404, detail="no dataset loaded")
        try:
            rows = bundle.dataset.split_rows(split)
        except Exception:
            raise HTTPException(status_code=400, detail=f"unknown split {split!r}") from None
        offset = max(0, offset)
        window = rows[offset : offset + max(0, limit)]
        corruption = bundle.dataset.manifest.get("corruption", "none")
        instances = []
        for i in window:
            entry: dict[str, Any] = {"id": int(i), "corruption": corruption}
            if bundle.reveal_ground_truth:
                row = bundle.dataset.labels.rows[i]
                entry["labels"] = {
                    c: model.variable(c).states[row[j]]
                    for j, c in enumerate(bundle.dataset.labels.columns)
                }
            else:
                entry["labels"] = None
            instances.append(entry)
        return {
            "split": split,
            "total": int(len(rows)),
            "offset": offset,
            "instances": instances,
        }

    @app.post("/predict")
    def predict(body: PredictBody) -> dict[str, Any]:
        if bundle.dataset is None:
            raise HTTPException(status_code=404, detail="no dataset loaded")
        alpha = bundle.fusion.alpha if body.alpha is None else body.alpha
        if not 0.0 <= alpha <= 1.0:
            raise HTTPException(status_code=422, detail=f"alpha {alpha} outside [0,1]")
        n = len(bundle.dataset)
        if not 0 <= body.instance_id < n:
            raise HTTPException(status_code=404, detail=f"unknown instance {body.instance_id}")

        assignments: dict[str, int] = {}
        for iv in body.interventions:
            if iv.attribute == model.class_variable:
                raise HTTPException(
                    status_code=400, detail="cannot intervene on the class variable"
                )
            if iv.attribute not in attrs:
                raise HTTPException(
                    status_code=400, detail=f"unknown attribute {iv.attribute!r}"
                )
            states = model.variable(iv.attribute).states
            if iv.value not in states:
                raise HTTPException(
                    status_code=400,
                    detail=f"unknown state {iv.value!r} for {iv.attribute}",
                )
            if iv.attribute in assignments:
                raise HTTPException(
                    status_code=400, detail=f"duplicate intervention on {iv.attribute}"
                )
            assignments[iv.attribute] = states.index(iv.value)
        do = InterventionSet.from_dict(assignments)

        x = bundle.dataset.embeddings[body.instance_id]
        heads = forward(bundle.predictor, x)
        clamped = clamp(heads, do, attrs)

        npc_dist = fusion.npc_class_dist(clamped, class_table)
        if do:
            poe = fusion.poe_attribute_dist(clamped, interventional_table(do), alpha)
            cnpc_dist = fusion.cnpc_interventional(poe, class_table)
            poe_table, z_alpha = poe.table, poe.z_alpha
        else:
            # observational path: both variants share the same rule
            poe_table = fusion.joint_from_heads(clamped)
            z_alpha = float(poe_table.sum())
            poe_table = poe_table / z_alpha
            cnpc_dist = npc_dist

        poe_marginals = fusion.attr_marginals(poe_table, cards)
        cnpc_attr, cnpc_class = fusion.predict_labels(poe_table, cnpc_dist, cards)
        npc_attr = [int(np.argmax(d)) for d in clamped]

        return {
            "instance_id": body.instance_id,
            "alpha": alpha,
            "interventions": [
                {"attribute": a, "value": model.variable(a).states[s]}
                for a, s in do.assignments
            ],
            "heads": {
                a: _as_list(d) for a, d in zip(attrs, heads)
            },
            "poe_marginals": {a: _as_list(m) for a, m in zip(attrs, poe_marginals)},
            "z_alpha": float(z_alpha),
            "npc": {
                "class_dist": _as_list(npc_dist),
                "class_label": class_states[int(np.argmax(npc_dist))],
                "attr_labels": {
                    a: model.variable(a).states[s] for a, s in zip(attrs, npc_attr)
                },
            },
            "cnpc": {
                "class_dist": _as_list(cnpc_dist),
                "class_label": class_states[cnpc_class],
                "attr_labels": {
                    a: model.variable(a).states[s] for a, s in zip(attrs, cnpc_attr)
                },
            },
        }

    @app.get("/suggest")
    def suggest(already: str = "") -> dict[str, Any]:
        used = {a for a in already.split(",") if a}
        unknown = used - set(attrs)
        if unknown:
            raise HTTPException(
                status_code=400, detail=f"unknown attributes {sorted(unknown)}"
            )
        for a in order:
            if a not in used:
                return {"suggestion": a}
        return {"suggestion": None}

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
