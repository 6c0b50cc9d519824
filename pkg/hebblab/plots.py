# python imports
import logging
from typing import List

# third party imports
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# local imports
from .fixedpoints import BifurcationEvent, BifurcationKind, Branch, StabilityClass  # noqa: E402

logger = logging.getLogger(__name__)

STABILITY_COLORS = {
    StabilityClass.STABLE: "black",
    StabilityClass.USEFUL_SADDLE: "tab:blue",
    StabilityClass.OTHER_UNSTABLE: "tab:red",
}
EVENT_COLORS = {
    BifurcationKind.PITCHFORK: "hotpink",
    BifurcationKind.PITCHFORK_REVERSE: "hotpink",
    BifurcationKind.SADDLE_NODE_BIRTH: "tab:green",
    BifurcationKind.SADDLE_NODE_DEATH: "tab:green",
    BifurcationKind.UNKNOWN: "tab:gray",
}


def render_bifurcation_svg(
    branches: List[Branch], events: List[BifurcationEvent], path: str, title: str = ""
) -> None:
    """
    Draw x1 against t for every branch, coloured by stability, with event
    markers: stable black, useful saddles blue, other saddles red,
    pitchforks pink and saddle-nodes green.
    """
    fig, ax = plt.subplots(figsize=(8, 5))
    for b in branches:
        times = b.times
        x1 = [p.location[0] for p in b.points]
        classes = [p.stability for p in b.points]
        start = 0
        for k in range(1, len(times) + 1):
            if k == len(times) or classes[k] is not classes[start]:
                segment = slice(start, min(k + 1, len(times)))
                ax.plot(times[segment], x1[segment], color=STABILITY_COLORS[classes[start]], linewidth=1.0)
                start = k
    for e in events:
        for location in e.participants:
            ax.plot(e.t_star, location[0], "o", markerfacecolor="none", color=EVENT_COLORS[e.kind], markersize=6)
    ax.set_xlabel("t")
    ax.set_ylabel("x1")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.info(f"Wrote bifurcation diagram to {path}")
