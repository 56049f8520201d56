"""Fit each country on its own and sort countries by internal vs external response."""

import tempfile

from infodemic.analysis import Quadrant, per_country_fit, taxonomy
from infodemic.ingest import Sources, build_panel
from infodemic.specs import get_model
from infodemic.synthetic import write_fixture

with tempfile.TemporaryDirectory() as tmp:
    sources = Sources.load(write_fixture(tmp, seed=3))
    panel = build_panel(get_model("1b"), sources)

results = per_country_fit(panel, "1b")
report = taxonomy([r for r in results if r.ok])
print(f"mean internal {report.mean_internal:.3f}, mean external {report.mean_external:.3f}")
for q in Quadrant:
    print(f"{q.value:<16} {', '.join(report.members[q]) or '-'}")

print("\nInternal minus external, most self-focused first:")
for code, d in report.ranking:
    print(f"  {code}  {d:+.3f}")
