"""Track how the internal elasticity drifts over time with six-month windows.

Each point is a full fixed-effects fit on the panel dates inside one window;
windows advance by a week and are labelled by their last date.
"""

import tempfile

from infodemic.analysis import rolling_elasticity
from infodemic.ingest import Sources, build_panel
from infodemic.specs import get_model
from infodemic.synthetic import write_fixture

with tempfile.TemporaryDirectory() as tmp:
    sources = Sources.load(write_fixture(tmp, seed=2))
    spec = get_model("1b")
    panel = build_panel(spec, sources)
    traj = rolling_elasticity(panel, spec, window="6m", step="7d").to_frame()

print(f"{len(traj)} windows over {panel.date_range}")
for _, row in traj.iloc[::4].iterrows():
    bar = "#" * max(0, int(round(row.beta * 100)))
    print(f"{row.window_end}  {row.beta:6.3f} ({row.se:.3f})  {bar}")
