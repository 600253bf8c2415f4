# main.py — HTTP batch surface for nodal-lab

import json
import os
import tempfile

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from cli import EXIT_COMPUTE, EXIT_CONFIG, ConfigError, build_config, parse_config_text, run
from config import ENGINE_NAME, VERSION, log


# =========================================================
# APP INIT
# =========================================================
app = FastAPI(title="nodal-lab scenario API", version=VERSION)


# =========================================================
# HELPERS
# =========================================================
def _read_summary(out_dir: str) -> dict:
    path = os.path.join(out_dir, "summary.json")
    if not os.path.exists(path):
        return {}
    with open(path, encoding="utf-8") as f:
        return json.load(f)


# =========================================================
# ENDPOINTS
# =========================================================
@app.get("/health")
async def health():
    return {"engine": ENGINE_NAME, "version": VERSION, "status": "ok"}


@app.post("/run")
async def run_scenario(
    config: UploadFile = File(...),
    scenario: str | None = Form(None)
):
    try:
        text = (await config.read()).decode("utf-8")
    except UnicodeDecodeError:
        return JSONResponse(status_code=422, content={"error": "Config file must be UTF-8 text"})

    try:
        with tempfile.TemporaryDirectory() as tmp:
            try:
                cfg = build_config(parse_config_text(text), scenario or None, {"out": tmp})
            except ConfigError as e:
                return JSONResponse(status_code=422, content={"error": str(e)})

            log(f"HTTP run: scenario {cfg.scenario} from {config.filename}")
            code = await run_in_threadpool(run, cfg)
            summary = _read_summary(tmp)

        if code == EXIT_CONFIG:
            return JSONResponse(status_code=422, content={"error": summary.get("error", "config error"),
                                                          "exit_code": code})
        if code == EXIT_COMPUTE:
            return JSONResponse(status_code=500, content={"error": summary.get("error", "compute error"),
                                                          "exit_code": code, "summary": summary})

        return JSONResponse({
            "scenario": cfg.scenario,
            "exit_code": code,
            "summary": summary
        })

    except Exception as e:
        return JSONResponse(
            status_code=500,
            content={"error": str(e)}
        )
