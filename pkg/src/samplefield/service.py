"""HTTP JSON API for interactive conditioning, mean inference, and sampling.

Sessions hold an observation set per client and a revision counter bumped
on every mutation; responses carry the revision they were computed from,
and snapshots are taken under the session lock so a response never mixes
two observation sets. Checkpoints are loaded once at startup and shared
read-only across requests.
"""

from __future__ import annotations

import secrets
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field as PField

from .inference import SamplerConfig, infer_mean, query_point, sample_signal
from .model import SampleSet
from .training import Checkpoint

MAX_GRID_CELLS = 4096  # keep interactive latency sane; 64x64 at most
MAX_N_PRIME = 4096
MAX_SAMPLES_PER_REQUEST = 8


class CreateSessionBody(BaseModel):
    checkpoint_id: str
    grid_shape: list[int] = PField(min_length=1, max_length=3)


class ObservationBody(BaseModel):
    x: list[float]
    v: list[float]


class PutObservationsBody(BaseModel):
    observations: list[ObservationBody]


class PostSamplesBody(BaseModel):
    n: int = PField(ge=1, le=MAX_SAMPLES_PER_REQUEST)
    seed: int | None = PField(default=None, ge=0)
    n_prime: int | None = PField(default=None, ge=0, le=MAX_N_PRIME)


@dataclass
class _Session:
    checkpoint_id: str
    grid_shape: tuple
    samples: SampleSet
    revision: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def _err(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def create_app(
    checkpoints: dict,
    session_cap: int = 64,
    cors_origins=("*",),
    default_n_prime: int = 1024,
) -> FastAPI:
    """Build the API over preloaded checkpoints (id -> Checkpoint)."""
    app = FastAPI(title="samplefield", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    sessions: OrderedDict[str, _Session] = OrderedDict()
    registry_lock = threading.Lock()

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"code": "error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        # Unparseable JSON is the client speaking the wrong language (400);
        # well-formed JSON with wrong fields is a validation failure (422).
        errors = exc.errors()
        if any(e.get("type") == "json_invalid" for e in errors):
            return JSONResponse(status_code=400, content={"code": "bad_json", "message": "request body is not valid JSON"})
        first = errors[0] if errors else {}
        loc = ".".join(str(p) for p in first.get("loc", ()))
        return JSONResponse(
            status_code=422,
            content={"code": "validation", "message": f"{loc}: {first.get('msg', 'invalid request')}"},
        )

    def _get_session(session_id: str) -> _Session:
        with registry_lock:
            sess = sessions.get(session_id)
            if sess is None:
                raise _err(404, "unknown_session", f"no session {session_id}")
            sessions.move_to_end(session_id)
            return sess

    def _ckpt(sess: _Session) -> Checkpoint:
        return checkpoints[sess.checkpoint_id]

    def _snapshot(sess: _Session):
        """Consistent (revision, samples) pair; samples are immutable."""
        with sess.lock:
            return sess.revision, sess.samples

    def _require_samples(sess: _Session):
        revision, samples = _snapshot(sess)
        if len(samples) == 0:
            raise _err(409, "empty_observations", "add at least one observation first")
        return revision, samples

    @app.get("/v1/checkpoints")
    def list_checkpoints():
        return {
            "checkpoints": [
                {
                    "id": name,
                    "pos_dim": c.model_cfg.pos_dim,
                    "value_dim": c.model_cfg.value_dim,
                    "value_range": list(c.value_range),
                }
                for name, c in checkpoints.items()
            ]
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        ckpt = checkpoints.get(body.checkpoint_id)
        if ckpt is None:
            raise _err(404, "unknown_checkpoint", f"no checkpoint {body.checkpoint_id!r} loaded")
        if len(body.grid_shape) != ckpt.model_cfg.pos_dim:
            raise _err(422, "bad_grid", f"grid must have {ckpt.model_cfg.pos_dim} extents")
        if any(n < 1 for n in body.grid_shape) or int(np.prod(body.grid_shape)) > MAX_GRID_CELLS:
            raise _err(422, "bad_grid", f"grid extents must be >= 1 with at most {MAX_GRID_CELLS} cells")
        p, d = ckpt.model_cfg.pos_dim, ckpt.model_cfg.value_dim
        sess = _Session(
            checkpoint_id=body.checkpoint_id,
            grid_shape=tuple(body.grid_shape),
            samples=SampleSet(np.zeros((0, p)), np.zeros((0, d))),
        )
        session_id = secrets.token_hex(8)
        with registry_lock:
            sessions[session_id] = sess
            while len(sessions) > session_cap:
                sessions.popitem(last=False)
        return {"session_id": session_id}

    @app.put("/v1/sessions/{session_id}/observations")
    def put_observations(session_id: str, body: PutObservationsBody):
        sess = _get_session(session_id)
        cfg = _ckpt(sess).model_cfg
        xs, vs = [], []
        for i, obs in enumerate(body.observations):
            if len(obs.x) != cfg.pos_dim:
                raise _err(422, "bad_observation", f"observation {i}: x must have {cfg.pos_dim} coordinates")
            if len(obs.v) != cfg.value_dim:
                raise _err(422, "bad_observation", f"observation {i}: v must have {cfg.value_dim} entries")
            if any(not (-1.0 <= t <= 1.0) for t in obs.x):
                raise _err(422, "bad_observation", f"observation {i}: position outside [-1, 1]")
            xs.append(obs.x)
            vs.append(obs.v)
        p, d = cfg.pos_dim, cfg.value_dim
        new_set = SampleSet(
            np.asarray(xs, dtype=np.float64).reshape(len(xs), p),
            np.asarray(vs, dtype=np.float64).reshape(len(vs), d),
        )
        with sess.lock:
            sess.samples = new_set
            sess.revision += 1
            return {"revision": sess.revision}

    @app.get("/v1/sessions/{session_id}/mean")
    def get_mean(session_id: str):
        sess = _get_session(session_id)
        revision, samples = _require_samples(sess)
        c = _ckpt(sess)
        mean = infer_mean(samples, sess.grid_shape, c.params, c.model_cfg, c.layout)
        return {
            "revision": revision,
            "grid_shape": list(sess.grid_shape),
            "values": mean.values.reshape(-1).tolist(),
        }

    @app.post("/v1/sessions/{session_id}/samples")
    def post_samples(session_id: str, body: PostSamplesBody):
        sess = _get_session(session_id)
        revision, samples = _require_samples(sess)
        c = _ckpt(sess)
        n_cells = int(np.prod(sess.grid_shape))
        n_prime = min(default_n_prime if body.n_prime is None else body.n_prime, n_cells)
        sampler = SamplerConfig(n_prime=n_prime)
        seeds = np.random.SeedSequence(body.seed).spawn(body.n)
        out = []
        for child in seeds:
            result = sample_signal(
                samples, sess.grid_shape, c.params, c.model_cfg, c.layout,
                sampler, np.random.default_rng(child),
            )
            out.append(result.signal.values.reshape(-1).tolist())
        return {"revision": revision, "samples": out}

    @app.get("/v1/sessions/{session_id}/query")
    def get_query(session_id: str, x: str):
        sess = _get_session(session_id)
        revision, samples = _require_samples(sess)
        c = _ckpt(sess)
        try:
            coords = np.asarray([float(t) for t in x.split(",")], dtype=np.float64)
        except ValueError:
            raise _err(422, "bad_query", f"cannot parse x={x!r} as comma-separated floats") from None
        if coords.shape[0] != c.model_cfg.pos_dim:
            raise _err(422, "bad_query", f"x must have {c.model_cfg.pos_dim} coordinates")
        if np.any(np.abs(coords) > 1.0):
            raise _err(422, "bad_query", "x outside [-1, 1]")
        summary = query_point(coords, samples, c.params, c.model_cfg, c.layout)
        return {
            "revision": revision,
            "expected": summary.expected.tolist(),
            "bins": [
                {
                    "q": float(summary.q[b]),
                    "center_plus_mu": summary.center_plus_mu[b].tolist(),
                    "sigma": float(summary.sigma[b]),
                }
                for b in range(summary.q.shape[0])
            ],
        }

    return app
