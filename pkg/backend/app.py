"""
Flask backend for the Weeding Robot MCU simulator.

Endpoints:
  GET  /api/health         Check if the backend is online
  GET  /api/scenarios      List the built-in scenarios
  POST /api/run            Run one scenario and return its summary and per-cycle rows
  POST /api/codec/encode   Encode an order into a framed message (hex)
  POST /api/codec/decode   Decode framed messages from hex

A run request looks like:
  {"scenario": "1", "cycles": 200, "mode": "det", "seed": 0,
   "source": "pc", "overrides": {"wheel.kp": 0.1}}
"""

import logging
import os
import sys

from flask import Flask, jsonify, request
from flask_cors import CORS

# Add the project root to the path so we can import the firmware modules
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from analysis.report import level_tracking
from analysis.runner import RUN_MODES, metrics_frame, run_scenario
from analysis.scenarios import list_scenarios, load_scenario
from config import get_config
from firmware.errors import WeedbotError
from firmware.messages import Order, OrderKind, decode_frames, encode_frame

logger = logging.getLogger(__name__)

MAX_CYCLES = 20_000

app = Flask(__name__)
CORS(app)


def _bad_request(message):
    return jsonify({"error": message}), 400


# ─── Routes ──────────────────────────────────────────────────────────────────

@app.route("/api/health", methods=["GET"])
def health():
    return jsonify({"status": "ok", "version": "1.0.0"})


@app.route("/api/scenarios", methods=["GET"])
def scenarios():
    return jsonify({"scenarios": list_scenarios()})


@app.route("/api/run", methods=["POST"])
def run():
    """Run a scenario. Deterministic mode with timing off unless asked otherwise."""
    body = request.get_json(silent=True) or {}
    try:
        cycles = int(body.get("cycles", 1000))
        if not 0 <= cycles <= MAX_CYCLES:
            return _bad_request(f"cycles must be between 0 and {MAX_CYCLES}")
        mode = body.get("mode", "det")
        if mode not in RUN_MODES:
            return _bad_request(f"mode must be one of {list(RUN_MODES)}")
        scenario = load_scenario(str(body.get("scenario", "1")), cycles=cycles, source=body.get("source"))
        cfg = get_config().with_overrides(body.get("overrides") or {})
        result = run_scenario(scenario, mode=mode, seed=int(body.get("seed", 0)),
                              cfg=cfg, timing=body.get("timing", "auto"))
    except (WeedbotError, ValueError, TypeError) as e:
        return _bad_request(str(e))
    except Exception as e:
        logger.exception("run failed")
        return jsonify({"error": str(e)}), 500

    rows = metrics_frame(result.metrics)
    return jsonify({
        "summary": result.summary.as_dict(),
        "levels": level_tracking(result.metrics).to_dict("records"),
        "metrics": rows.to_dict("records"),
    })


@app.route("/api/codec/encode", methods=["POST"])
def codec_encode():
    body = request.get_json(silent=True) or {}
    try:
        kind = OrderKind[str(body.get("kind", "velocity")).upper()]
        if kind == OrderKind.STOP:
            order = Order.stop()
        else:
            wheel = body.get("wheel", 0.0)
            wheel = tuple(float(w) for w in wheel) if isinstance(wheel, list) else float(wheel)
            order = Order(kind, wheel, float(body.get("steering", 0.0)))
        frame = encode_frame(order)
    except KeyError:
        return _bad_request(f"unknown order kind {body.get('kind')!r}")
    except (WeedbotError, ValueError, TypeError) as e:
        return _bad_request(str(e))
    return jsonify({"hex": frame.hex(" ").upper(), "length": len(frame)})


@app.route("/api/codec/decode", methods=["POST"])
def codec_decode():
    body = request.get_json(silent=True) or {}
    try:
        data = bytes.fromhex(str(body.get("hex", "")))
    except ValueError as e:
        return _bad_request(str(e))

    messages, dropped = [], []
    for item in decode_frames(data):
        if isinstance(item, WeedbotError):
            dropped.append({"error": type(item).__name__, "detail": str(item)})
        elif isinstance(item, Order):
            messages.append({
                "kind": item.kind.name.lower(),
                "wheel": list(item.wheel),
                "steering": item.steering,
            })
        else:
            messages.append({"kind": "telemetry", "cycle": item.cycle, "error": item.error})
    return jsonify({"messages": messages, "dropped": dropped})


# ─── Entry point ─────────────────────────────────────────────────────────────

if __name__ == "__main__":
    port = int(os.environ.get("PORT", 5000))
    debug = os.environ.get("FLASK_DEBUG", "0") == "1"
    print(f"Weeding robot simulator backend starting on port {port}")
    app.run(host="0.0.0.0", port=port, debug=debug)
