"""Regenerate the shipped beam meshes under src/fsiopt/data."""
from pathlib import Path

from fsiopt.scenarios.beam import beam_meshes

out = Path(__file__).resolve().parents[1] / "src" / "fsiopt" / "data"
out.mkdir(parents=True, exist_ok=True)
fluid, solid = beam_meshes()
fluid.save(out / "beam_fluid.msh")
solid.save(out / "beam_solid.msh")
print(f"fluid: {fluid.n_elements} triangles, {2 * fluid.n_nodes} velocity dofs")
print(f"solid: {solid.n_elements} triangles, {2 * solid.n_nodes} displacement dofs")
