"""Static SVG figures. Output is byte-stable for identical inputs."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ptsne"
plt.rcParams["svg.fonttype"] = "none"

_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def scatter(path, Y, labels=None, title="embedding"):
    fig, ax = plt.subplots(figsize=(6, 6))
    c = None if labels is None else np.asarray(labels)
    ax.scatter(Y[:, 0], Y[:, 1], s=2, c=c, cmap="tab20" if c is not None else None, linewidths=0)
    ax.set_aspect("equal")
    ax.set_title(title)
    _save(fig, path)


def trace(path, records, global_costs=None):
    epochs = [r.epoch for r in records]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [r.avg_cost for r in records], color="tab:blue", label="average cost")
    if global_costs is not None:
        ax.plot(epochs, global_costs, color="tab:green", label="global cost")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cost")
    ax2 = ax.twinx()
    ax2.plot(epochs, [r.avg_size for r in records], color="tab:red", label="size")
    ax2.set_ylabel("size")
    ax.legend(loc="upper center")
    _save(fig, path)


def _extent(raster):
    return (raster.x0, raster.x0 + raster.width * raster.cell_size,
            raster.y0, raster.y0 + raster.height * raster.cell_size)


def boundaries(labels):
    """Cells whose label differs from a right or lower neighbour."""
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    edge[:-1, :] |= labels[:-1, :] != labels[1:, :]
    return edge


def raster(path, raster, labels=None, title="density"):
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(raster.values, origin="lower", extent=_extent(raster), cmap="viridis", interpolation="nearest")
    if labels is not None:
        mask = np.ma.masked_where(~boundaries(labels), np.ones(labels.shape))
        ax.imshow(mask, origin="lower", extent=_extent(raster), cmap="gray_r", vmin=0, vmax=1,
                  interpolation="nearest", alpha=0.9)
    ax.set_title(title)
    _save(fig, path)


def entropy(path, table):
    sizes = [s for s, _ in table]
    vals = [v for _, v in table]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sizes, vals, marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("size")
    ax.set_ylabel("normalized entropy")
    _save(fig, path)
