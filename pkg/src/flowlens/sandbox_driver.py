#!/usr/bin/env python3
"""In-sandbox driver: executes code in a persistent namespace over stdio.

Launched as ``<interpreter> driver.py`` with the session working directory as
cwd.  Reads one JSON request per stdin line and writes one JSON response per
request to stdout, echoing the request id.  User code's stdout/stderr are
captured per request (probe sentinel lines stay verbatim in the stdout field;
the host demultiplexes them).  Figures drawn with matplotlib are saved as PNG
under ``figures/fig_<n>.png`` and reported in the response; interactive
display is suppressed via the Agg backend.

Requests:
  {"id": 1, "op": "exec",    "code": "x = 1"}
  {"id": 2, "op": "preview", "var": "df", "limit": 20}
  {"id": 3, "op": "reset"}

Responses always carry: id, status ("ok"|"error"), stdout, stderr,
probes (always empty; the host fills its own records), figures; plus
"preview" for preview requests and "error" {type, message, traceback}
on failure.

No third-party imports: only the dataframe/plotting stack the analyzed code
itself pulls in is ever loaded.
"""

import io
import json
import os
import sys
import traceback
from contextlib import redirect_stderr, redirect_stdout

os.environ.setdefault("MPLBACKEND", "Agg")

DEFAULT_OUTPUT_CAP = 1 << 20  # bytes of captured stdout/stderr per request
FIGURE_DIR = "figures"


def _seed_rngs():
    import random

    random.seed(0)
    try:
        import numpy

        numpy.random.seed(0)
    except Exception:
        pass


class DriverState:
    def __init__(self, output_cap=DEFAULT_OUTPUT_CAP):
        self.output_cap = output_cap
        self.namespace = {}
        self.reset()

    def reset(self):
        self.namespace.clear()
        self.namespace["__name__"] = "__main__"
        self.namespace["__builtins__"] = __builtins__
        _seed_rngs()


def _truncate(text, cap):
    if len(text) <= cap:
        return text
    return text[:cap] + "\n...[output truncated]\n"


def _existing_figures():
    if not os.path.isdir(FIGURE_DIR):
        return set()
    return set(os.listdir(FIGURE_DIR))


def _sweep_open_figures(namespace):
    """Save and close figures user code left open (probe statements normally
    do this; the sweep covers unprobed code paths)."""
    plt = sys.modules.get("matplotlib.pyplot")
    if plt is None:
        return
    try:
        nums = list(plt.get_fignums())
        if not nums:
            return
        os.makedirs(FIGURE_DIR, exist_ok=True)
        for num in nums:
            namespace["__wg_figc"] = namespace.get("__wg_figc", 0) + 1
            path = os.path.join(FIGURE_DIR, "fig_%d.png" % namespace["__wg_figc"])
            plt.figure(num).savefig(path)
        plt.close("all")
    except Exception:
        pass


def handle_exec(state, code):
    before = _existing_figures()
    out, err = io.StringIO(), io.StringIO()
    error = None
    with redirect_stdout(out), redirect_stderr(err):
        try:
            exec(compile(code, "<unit>", "exec"), state.namespace)
        except BaseException as exc:
            error = {
                "type": type(exc).__name__,
                "message": str(exc),
                "traceback": traceback.format_exc(),
            }
        _sweep_open_figures(state.namespace)
    new_figures = sorted(
        os.path.join(FIGURE_DIR, name)
        for name in _existing_figures() - before
    )
    response = {
        "status": "error" if error else "ok",
        "stdout": _truncate(out.getvalue(), state.output_cap),
        "stderr": _truncate(err.getvalue(), state.output_cap),
        "probes": [],
        "figures": new_figures,
    }
    if error:
        response["error"] = error
    return response


def handle_preview(state, var, limit):
    base = {"stdout": "", "stderr": "", "probes": [], "figures": []}
    if var not in state.namespace:
        base.update(status="error", error={
            "type": "unknown_variable",
            "message": "unknown variable: %s" % var,
            "traceback": "",
        })
        return base
    value = state.namespace[var]
    type_name = type(value).__name__
    if type_name == "DataFrame":
        columns = [str(c) for c in value.columns]
        head = value.head(limit)
        rows = [[str(cell) for cell in row] for row in head.itertuples(index=False)]
    elif type_name == "Series":
        columns = ["" if value.name is None else str(value.name)]
        rows = [[str(cell)] for cell in value.head(limit)]
    else:
        base.update(status="error", error={
            "type": "not_a_table",
            "message": "variable %s is %s, not a table" % (var, type_name),
            "traceback": "",
        })
        return base
    base.update(status="ok", preview={"columns": columns, "rows": rows})
    return base


def handle_request(state, request):
    op = request.get("op")
    if op == "exec":
        return handle_exec(state, request.get("code", ""))
    if op == "preview":
        limit = request.get("limit")
        return handle_preview(state, request.get("var", ""),
                              20 if limit is None else int(limit))
    if op == "reset":
        state.reset()
        return {"status": "ok", "stdout": "", "stderr": "",
                "probes": [], "figures": []}
    return {
        "status": "error", "stdout": "", "stderr": "", "probes": [],
        "figures": [],
        "error": {"type": "protocol", "message": "unknown op: %r" % (op,),
                  "traceback": ""},
    }


def serve_loop(stdin=None, stdout=None, output_cap=DEFAULT_OUTPUT_CAP):
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    state = DriverState(output_cap)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        request_id = None
        try:
            request = json.loads(line)
            request_id = request.get("id")
            response = handle_request(state, request)
        except Exception as exc:
            response = {
                "status": "error", "stdout": "", "stderr": "", "probes": [],
                "figures": [],
                "error": {"type": "protocol", "message": str(exc),
                          "traceback": traceback.format_exc()},
            }
        response["id"] = request_id
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    cap = DEFAULT_OUTPUT_CAP
    if len(argv) == 2 and argv[0] == "--output-cap-bytes":
        cap = int(argv[1])
    serve_loop(output_cap=cap)


if __name__ == "__main__":
    main()
