"""Smoke test for the `sdm` extension module.

Builds the extension with cargo, loads it from a temporary directory and
exercises parse -> apply -> replay -> generate. Run from anywhere:

    python3 python/smoke_test.py
"""

import importlib.util
import json
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "sdm-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libsdm.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "sdm.so")
    spec = importlib.util.spec_from_file_location("sdm", tmp / "sdm.so")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    sdm = build_and_import()
    print("sdm", sdm.__version__)

    mesh = sdm.Mesh.synthetic(7, ["rect_through_slot"])
    slot = dict(mesh.labels())["rect_through_slot"]
    print(mesh, "slot faces", slot)

    parsed = sdm.parse_command("move the slot 3 mm to the right")
    assert parsed.get("failure") is None, parsed
    command = parsed["structured"]
    assert command["commands"][0]["operation"]["parameters"]["distance_mm"] == 3.0

    moved, calls = mesh.apply(command, slot)
    assert calls[0]["function"] == "translate_faces"
    assert calls[0]["arguments"]["vector"] == [3.0, 0.0, 0.0]
    assert moved.to_json() != mesh.to_json()
    assert mesh.replay(json.dumps(calls)).to_json() == moved.to_json()

    tokens = mesh.tokens()
    assert len(tokens) == mesh.face_count

    model = sdm.Model(seed=1)
    result = model.generate(mesh, slot[0], "slot")
    picks = [t for t in result["raw_sequence"] if t != 0]
    assert len(picks) == len(set(picks)), result["raw_sequence"]
    assert len(result["raw_sequence"]) <= mesh.face_count + 1

    assert "[STEP 5]" in sdm.build_prompt("delete the pocket")
    assert "rect_through_slot" in sdm.vocabulary()
    try:
        sdm.Mesh.synthetic(1, ["dovetail"])
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("unknown feature type accepted")
    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
