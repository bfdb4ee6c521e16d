"""Model sizes of the CSTR superstructure as the number of stages grows."""

from gdpq.gen import CstrParams, gen_cstr
from gdpq.reform import reformulate

print(f"{'NT':>3} {'method':>11} {'vars':>6} {'binaries':>8} {'rows':>6}")
for NT in (1, 2, 3, 5):
    gdp = gen_cstr(CstrParams(NT=NT))
    for method in ("bigm", "hull-exact"):
        minlp, rep = reformulate(gdp, method)
        print(f"{NT:>3} {method:>11} {len(minlp.variables):>6} {rep.counts['binary_vars']:>8} "
              f"{len(minlp.all_rows()):>6}")
