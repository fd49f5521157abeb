"""Plain-text and CSV serialisation of graphs, coefficient tables and gluing weights."""

import csv
import io

import numpy as np

__all__ = ["fmt", "coefficients_csv", "gluing_text", "graph_text", "write_csv"]


def fmt(value):
    """Six significant digits in scientific notation; integers and strings pass through."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return f"{float(value):.5e}"


def write_csv(rows, header, comments=(), handle=None):
    """Render rows to CSV text (``#``-prefixed comment lines first); optionally write to ``handle``."""
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if handle is not None:
        handle.write(text)
    return text


def coefficients_csv(tables, comments=()):
    rows = [row for tab in tables for row in tab.rows()]
    return write_csv(rows, ["edge", "x", "T", "L0U_hat", "A_hat"], comments)


def gluing_text(weights):
    lines = [f"vertex O{weights.vertex}"]
    for i, b, p in zip(weights.edges, weights.b, weights.p):
        side = "below" if i in weights.lower else "above"
        lines.append(f"  edge I{i} ({side}): b = {b:.6e}  p = {p:.6f}")
    for i, q in weights.descent.items():
        lines.append(f"  descent into I{i}: {q:.6f}")
    lines.append(f"  flux residual (upper - lower)/total: {weights.flux_residual:.3e}")
    return "\n".join(lines)


def graph_text(graph):
    return graph.describe()
