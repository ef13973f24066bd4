"""Stateless HTTP service exposing the folded deformation layer."""

import numpy as np
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse


def create_app(system, cors_origins=("*",)):
    app = FastAPI(title="lapdeform deform service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    k = system.handle_count

    @app.get("/mesh")
    def get_mesh():
        return {
            "vertices": system.template.vertices.tolist(),
            "faces": system.template.faces.tolist(),
        }

    @app.get("/handles")
    def get_handles():
        return {
            "k": k,
            "seeds": system.handles.seed_vertices.tolist(),
            "template_positions": system.template_handles.tolist(),
        }

    @app.post("/deform")
    async def post_deform(body: dict):
        offsets = body.get("offsets")
        if offsets is None:
            return JSONResponse({"error": "missing 'offsets'"}, status_code=400)
        try:
            arr = np.asarray(offsets, dtype=np.float64)
        except (TypeError, ValueError):
            return JSONResponse({"error": "offsets must be a K x 3 number array"},
                                status_code=400)
        if arr.shape != (k, 3):
            return JSONResponse(
                {"error": f"offsets must have shape ({k}, 3), got {list(arr.shape)}"},
                status_code=400,
            )
        if not np.isfinite(arr).all():
            return JSONResponse({"error": "offsets must be finite"}, status_code=422)
        vertices = system.deform_vertices(arr)
        return {"vertices": vertices.tolist()}

    return app
