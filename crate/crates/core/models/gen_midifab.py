"""Generates midifab.toml. Optional argument: JSON object of parameter overrides."""
import random, sys, json
P = json.loads(sys.argv[1]) if len(sys.argv) > 1 else {}
def p(k, d): return P.get(k, d)
rng = random.Random(p("seed", 7))

groups = {  # id: (tools, base hours, mtbf, mttr, setup?, batch)
  "wet":   (p("n_wet",4),   0.55, 300, 4,  False, None),
  "furnace": (p("n_furn",5), 5.0, 400, 8,  False, (4, 1)),
  "depo":  (p("n_depo",5),  1.0, 250, 5,  False, None),
  "litho": (p("n_litho",7), 0.75, 180, 3,  True,  None),
  "etch":  (p("n_etch",6),  0.95, 220, 4,  False, None),
  "implant": (p("n_imp",4), 0.85, 200, 5,  True,  None),
  "metro": (p("n_metro",4), 0.35, 500, 2,  False, None),
  "cmp":   (p("n_cmp",3),   1.1, 250, 5,  False, None),
  "test":  (p("n_test",2),  1.6, 400, 6,  False, None),
}
products = {  # id: layers
  "p1": p("l1", 9), "p2": p("l2", 7), "p3": p("l3", 5), "p4": p("l4", 4)}
species = ["b", "p", "as"]
speed = {}
for g,(n,base,*_) in groups.items():
    for i in range(n):
        speed[f"{g}_{i+1}"] = 1.0 + rng.uniform(-0.08, 0.12)


out = [
    "# Scaled SMT2020-style fab: 40 tools in 9 groups, 4 products, hot and",
    "# super-hot lots, litho and implant setups, furnace batching and",
    "# wet-to-furnace time constraints. Generated; see models/README.md.",
    "",
]
out.append('name = "midifab"')
out.append(f'horizon_hours = {p("horizon",1200.0)}')
out.append("")
for pr in products:
    out += ["[[products]]", f'id = "{pr}"', f'route = "r_{pr}"', ""]
for g,(n,base,mtbf,mttr,setup,batch) in groups.items():
    out += ["[[tool_groups]]", f'id = "{g}"', f'dispatch = "hier-cr"']
    if batch:
        out += ["", f"[tool_groups.batching]", f"max_size = {batch[0]}", f"min_size = {batch[1]}"]
    out.append("")
    for i in range(n):
        t = f"{g}_{i+1}"
        out += ["[[tool_groups.tools]]", f'id = "{t}"', f"mtbf_hours = {mtbf}", f"mttr_hours = {mttr}"]
        if setup:
            out.append('setup_changes = [')
            sh = p("litho_setup",0.4) if g=="litho" else p("imp_setup",0.6)
            fams = [f"{pr}_m{k}" for pr in products for k in range(3)] if g=="litho" else species
            for fam in fams:
                out.append(f'  {{ from = "*", to = "{fam}", hours = {sh} }},')
            out.append(']')
        out.append("")

def step(g, key, pr, layer, setup=None, batch=False, tc=None, dedicate=None):
    n, base = groups[g][0], groups[g][1]
    tools = [f"{g}_{i+1}" for i in range(n)]
    if dedicate:
        tools = tools[:dedicate]
    h = base * rng.uniform(0.8, 1.25)
    s = [f"[[routes.r_{pr}.steps]]", f'tool_group = "{g}"']
    if setup: s.append(f'setup = "{setup}"')
    if batch: s.append("batch_eligible = true")
    if tc: s.append(f"time_constraint_hours = {tc}")
    s += ["", f"[routes.r_{pr}.steps.processing_time_hours]"]
    for t in tools:
        s.append(f"{t} = {round(h*speed[t],4)}")
    s.append("")
    return s

for pr, layers in products.items():
    for L in range(layers):
        out += step("wet", "clean", pr, L)
        out += step("furnace", "ox", pr, L, batch=True, tc=p("tc", 6.0))
        out += step("depo", "dep", pr, L)
        out += step("litho", "lit", pr, L, setup=f"{pr}_m{L%3}", dedicate=(p("ded",4) if L % 2 == 0 else None))
        out += step("etch", "etch", pr, L)
        if L % 2 == 1:
            out += step("implant", "imp", pr, L, setup=species[L % 3])
        out += step("metro", "m", pr, L)
        if L % 3 == 2:
            out += step("cmp", "cmp", pr, L)
    out += step("test", "test", pr, layers)

# releases
rel = [("p1", p("e1", 18.7)), ("p2", p("e2", 15.3)), ("p3", p("e3", 11.9)), ("p4", p("e4", 13.6))]
for i, (pr, every) in enumerate(rel):
    out += ["[[releases]]", f'product = "{pr}"', f"at_hours = {i*1.5}", "wafers = 25", f"every_hours = {every}", ""]
out += ["[[releases]]", 'product = "p2"', f"at_hours = 5.0", 'priority = "hot"', "wafers = 25", f"every_hours = {p('ehot', 60.0)}", ""]
out += ["[[releases]]", 'product = "p3"', f"at_hours = 11.0", 'priority = "hot"', "wafers = 25", f"every_hours = {p('ehot', 60.0)*1.3}", ""]
out += ["[[releases]]", 'product = "p4"', f"at_hours = 30.0", 'priority = "super_hot"', "wafers = 12", f"every_hours = {p('eshot', 150.0)}", ""]
print("\n".join(out))
