"""
Static SVG rendering of a scene with its forecasts. Output bytes depend only on
the inputs: the SVG id salt is fixed and no date metadata is written.
"""
import io
import logging
import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from pathlib import Path
from typing import Optional, Union
from lanet.core.domain.forecast import Forecast
from lanet.core.domain.scene import PolygonKind, Scene

logger = logging.getLogger(__name__)

SVG_SALT = "lanet"

_MAP_STYLE = {
    PolygonKind.LANE_CENTERLINE: dict(color="#b0b0b0", linestyle="--", linewidth=0.8),
    PolygonKind.LANE_BOUNDARY: dict(color="#404040", linestyle="-", linewidth=1.0),
    PolygonKind.CROSSWALK: dict(color="#d0a030", linestyle="-", linewidth=2.0),
    PolygonKind.ROAD_EDGE: dict(color="#000000", linestyle="-", linewidth=1.5),
}


def render_scene(scene: Scene, forecast: Optional[Forecast] = None) -> bytes:
    h = scene.config.history_steps
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig = Figure(figsize=(6, 6))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot(1, 1, 1)
        ax.set_aspect("equal", adjustable="datalim")

        for poly in scene.polygons:
            xy = poly.xy()
            (line,) = ax.plot(xy[:, 0], xy[:, 1], **_MAP_STYLE[poly.kind])
            line.set_gid(f"map-{poly.polygon_id}")

        for agent in scene.agents:
            poses = agent.pose_array()
            valid = agent.valid_array()
            hist = poses[:h][valid[:h]]
            (line,) = ax.plot(hist[:, 0], hist[:, 1], color="#1f4e9c" if agent.is_target else "#7a7a7a", linewidth=1.5)
            line.set_gid(f"history-{agent.agent_id}")
            if agent.is_target:
                fut = poses[h:][valid[h:]]
                (line,) = ax.plot(fut[:, 0], fut[:, 1], color="#7b2fa0", linewidth=1.5)
                line.set_gid(f"truth-{agent.agent_id}")

        if forecast is not None:
            f = forecast.detach()
            locations = f.locations.cpu().numpy()
            probs = f.mode_probs.cpu().numpy()
            for i in range(f.num_agents):
                agent_id = f.agent_ids[i] if f.agent_ids else str(i)
                for k in range(f.num_modes):
                    (line,) = ax.plot(locations[i, k, :, 0], locations[i, k, :, 1], color="#2ca02c", linewidth=0.8, alpha=0.6)
                    line.set_gid(f"prediction-{agent_id}-{k}")
                best = int(np.argmax(probs[i]))
                (line,) = ax.plot(locations[i, best, :, 0], locations[i, best, :, 1], color="#d62728", linewidth=2.0)
                line.set_gid(f"best-{agent_id}")

        ax.set_title(scene.scenario_id)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def save_plot(scene: Scene, path: Union[str, Path], forecast: Optional[Forecast] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render_scene(scene, forecast))
    logger.info(f"Wrote figure {path}")
    return path
