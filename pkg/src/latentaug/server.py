"""HTTP/JSON API over a pipeline workspace, consumed by the explorer UI.

Read endpoints serve dataset images, factorized directions with their
curation state, artifacts, and job statuses. Write endpoints invert
uploaded or referenced images, render directional edits as PNG (with the
perceptual distance to the unedited reconstruction in the ``X-Lpips``
header), and record curation decisions. Curation writes are serialized by
the store's lock; GETs never mutate observable state.
"""

from __future__ import annotations

import io
import json
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from PIL import Image

from .data import from_uint8, load_image, to_uint8
from .factorization import FactorizationResult, apply_direction, rank_directions
from .gan import GanCheckpoint, LatentCode
from .gan.ops import synthesize
from .inversion import invert, load_encoder, load_hypernet
from .metrics import DeskEmbedder, lpips
from .pipeline import Workspace
from .store import StoreError
from . import data as data_mod

__all__ = ["create_app", "serve"]


class ServiceState:
    """Lazily loaded artifacts of one workspace plus in-memory inversions."""

    def __init__(self, workspace: Workspace):
        self.ws = workspace
        self.lock = threading.Lock()
        self.embedder = DeskEmbedder()
        self.inversions: dict[str, dict] = {}
        self._generator = None
        self._encoder = None
        self._hypernet = None
        self._manifest = None
        self._factorization = None
        self._rank_scores: dict[int, float] | None = None

    @property
    def manifest(self):
        if self._manifest is None:
            self._manifest = data_mod.load_manifest(self.ws.manifest_path)
        return self._manifest

    @property
    def generator(self):
        if self._generator is None:
            self._generator = GanCheckpoint.load(self.ws.checkpoint_path).build_generator("ema")
        return self._generator

    @property
    def encoder(self):
        if self._encoder is None:
            self._encoder = load_encoder(self.ws.encoder_path)
        return self._encoder

    @property
    def hypernet(self):
        if self._hypernet is None and self.ws.hypernet_path.exists():
            self._hypernet = load_hypernet(self.ws.hypernet_path)
        return self._hypernet

    @property
    def factorization(self) -> FactorizationResult:
        if self._factorization is None:
            self._factorization = FactorizationResult.load(self.ws.factorization_path)
        return self._factorization

    def rank_scores(self) -> dict[int, float]:
        with self.lock:
            if self._rank_scores is None:
                rng = np.random.default_rng(0)
                probes = [
                    LatentCode(
                        "Z",
                        rng.normal(size=self.generator.cfg.latent_dim).astype(np.float32),
                    )
                    for _ in range(4)
                ]
                ranking = rank_directions(
                    self.factorization, self.generator, probes, magnitude=3.0, metric="pixel"
                )
                self._rank_scores = {r["index"]: r["mean_image_change"] for r in ranking}
            return self._rank_scores


def _png_bytes(pixels: np.ndarray, size: int | None = None) -> bytes:
    img = Image.fromarray(to_uint8(pixels))
    if size is not None and size != img.size[0]:
        img = img.resize((size, size), Image.BILINEAR)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(workspace: str | Path | Workspace) -> FastAPI:
    ws = workspace if isinstance(workspace, Workspace) else Workspace(workspace)
    state = ServiceState(ws)
    app = FastAPI(title="latentaug service")
    app.state.service = state

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/config")
    def config():
        gen = state.generator
        return {
            "resolution": gen.cfg.resolution,
            "latent_dim": gen.cfg.latent_dim,
            "num_style_inputs": gen.num_style_inputs,
            "n_directions": state.factorization.dim,
            "lpips_threshold": 0.2,
            "max_magnitude": 4.0,
        }

    @app.get("/images")
    def list_images(split: str | None = None):
        entries = state.manifest.entries
        out = []
        for i, e in enumerate(entries):
            if split is None or e.split == split:
                out.append({"id": i, "path": e.path, "label": e.label, "split": e.split})
        return {"images": out}

    @app.get("/images/{image_id}")
    def get_image(image_id: int, size: int | None = None):
        entries = state.manifest.entries
        if not 0 <= image_id < len(entries):
            raise HTTPException(404, f"unknown image {image_id}")
        pixels = load_image(
            state.manifest.resolve(entries[image_id]), state.manifest.resolution
        )
        return Response(content=_png_bytes(pixels, size), media_type="image/png")

    @app.post("/invert")
    async def invert_image(request: Request):
        content_type = request.headers.get("content-type", "")
        steps = 5
        if content_type.startswith("application/json"):
            payload = await request.json()
            steps = int(payload.get("steps", 5))
            image_id = payload.get("image_id")
            if image_id is None:
                raise HTTPException(400, "image_id required (or upload a PNG body)")
            entries = state.manifest.entries
            if not 0 <= int(image_id) < len(entries):
                raise HTTPException(404, f"unknown image {image_id}")
            pixels = load_image(
                state.manifest.resolve(entries[int(image_id)]), state.manifest.resolution
            )
            source = f"image:{image_id}"
        else:
            if "steps" in request.query_params:
                steps = int(request.query_params["steps"])
            raw = await request.body()
            try:
                img = Image.open(io.BytesIO(raw)).convert("RGB")
            except Exception as exc:
                raise HTTPException(400, f"undecodable image upload: {exc}") from exc
            res = state.manifest.resolution
            if img.size != (res, res):
                img = img.resize((res, res), Image.BILINEAR)
            pixels = from_uint8(np.asarray(img, dtype=np.uint8))
            source = "upload"
        result = invert(
            pixels,
            state.encoder,
            state.generator,
            hypernet=state.hypernet,
            steps=steps,
            embedder=state.embedder,
        )
        with state.lock:
            inversion_id = f"inv-{len(state.inversions):04d}"
            recon = synthesize(
                state.generator, result.latent, weight_offsets=result.weight_offsets or None
            ).pixels
            state.inversions[inversion_id] = {
                "result": result,
                "recon": recon,
                "source": source,
            }
        return {
            "inversion_id": inversion_id,
            "source": source,
            "l2": result.final_l2,
            "loss_trace": result.loss_trace,
        }

    @app.get("/inversions/{inversion_id}")
    def get_inversion(inversion_id: str):
        info = state.inversions.get(inversion_id)
        if info is None:
            raise HTTPException(404, f"unknown inversion {inversion_id}")
        result = info["result"]
        return {
            "inversion_id": inversion_id,
            "source": info["source"],
            "l2": result.final_l2,
            "loss_trace": result.loss_trace,
        }

    @app.post("/edit")
    async def edit(request: Request):
        payload = await request.json()
        direction_index = payload.get("direction_index")
        if direction_index is None:
            raise HTTPException(400, "direction_index required")
        try:
            direction = state.factorization.direction(int(direction_index))
        except Exception as exc:
            raise HTTPException(400, str(exc)) from exc
        magnitude = float(payload.get("magnitude", 0.0))
        layer_range = payload.get("layer_range")
        if layer_range is not None:
            layer_range = (int(layer_range[0]), int(layer_range[1]))
        size = payload.get("size")

        offsets = None
        if "inversion_id" in payload:
            info = state.inversions.get(payload["inversion_id"])
            if info is None:
                raise HTTPException(404, f"unknown inversion {payload['inversion_id']}")
            latent = info["result"].latent
            offsets = info["result"].weight_offsets or None
            reference = info["recon"]
        elif "latent" in payload:
            values = np.asarray(payload["latent"], dtype=np.float32)
            space = "Wplus" if values.ndim == 2 else "W"
            latent = LatentCode(space, values)
            reference = synthesize(state.generator, latent).pixels
        else:
            raise HTTPException(400, "inversion_id or latent required")

        try:
            edited_code = apply_direction(latent, direction, magnitude, layer_range=layer_range)
        except Exception as exc:
            raise HTTPException(400, str(exc)) from exc
        edited = synthesize(state.generator, edited_code, weight_offsets=offsets).pixels
        score = lpips(edited, reference, state.embedder).value
        png = _png_bytes(edited, int(size) if size else None)
        return Response(
            content=png,
            media_type="image/png",
            headers={"X-Lpips": f"{score:.8f}", "X-Magnitude": f"{magnitude}"},
        )

    @app.get("/directions")
    def directions(ranked: bool = False):
        fact = state.factorization
        curation = state.ws.curation()
        scores = state.rank_scores() if ranked else {}
        out = []
        for entry in curation.all():
            i = entry["index"]
            out.append(
                {
                    "index": i,
                    "singular_value": float(fact.singular_values[i]),
                    "degenerate": bool(fact.degenerate[i]),
                    "status": entry["status"],
                    "name": entry["name"],
                    "duplicate_of": entry["duplicate_of"],
                    "rank_score": scores.get(i),
                }
            )
        if ranked:
            out.sort(key=lambda d: (d["rank_score"] is None, -(d["rank_score"] or 0.0)))
        return {"directions": out}

    @app.post("/curation")
    async def curate(request: Request):
        payload = await request.json()
        if "index" not in payload or "status" not in payload:
            raise HTTPException(400, "index and status required")
        curation = state.ws.curation()
        try:
            updated = curation.set(
                int(payload["index"]),
                str(payload["status"]),
                name=payload.get("name"),
                duplicate_of=(
                    int(payload["duplicate_of"])
                    if payload.get("duplicate_of") is not None
                    else None
                ),
                notes=payload.get("notes"),
            )
        except StoreError as exc:
            raise HTTPException(409, str(exc)) from exc
        return updated

    @app.get("/artifacts")
    def artifacts():
        return {
            "artifacts": [
                {
                    "artifact_id": e.artifact_id,
                    "kind": e.kind,
                    "path": e.path,
                    "created_at": e.created_at,
                    "parent_ids": e.parent_ids,
                }
                for e in ws.store.entries()
            ]
        }

    @app.get("/jobs")
    def jobs():
        return {"jobs": ws.jobs.all()}

    @app.get("/jobs/{job_id}")
    def job(job_id: str):
        try:
            return ws.jobs.get(job_id)
        except StoreError as exc:
            raise HTTPException(404, str(exc)) from exc

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(workspace: str | Path, host: str = "127.0.0.1", port: int = 8008):
    """Run the API with uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(workspace), host=host, port=port, log_level="warning")
