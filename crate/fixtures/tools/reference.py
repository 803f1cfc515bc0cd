#!/usr/bin/env python3
"""Assemble the fixture corpus and record reference outcomes with wasmtime.

For every fixtures/NAME.wat this writes NAME.wasm and NAME.expected.json.
The expected file holds what wasmtime observes when NAME.workload.json is run
against one instance with the env.log / env.log64 / env.abort host:

    instantiation     "ok", {"trap": kind} or {"linkError": message}
    startHostCalls    host calls made while instantiating
    invocations       [{"outcome": {"results": [...]} | {"trap": kind},
                        "hostCalls": [...]}]
    memoryDigest      FNV-1a 64 of the exported "memory" after the run, as
                      16 hex digits, or null when no memory is exported

Values are written as {"i32": n}, {"i64": "n"}, {"f32": "0x........"} and
{"f64": "0x................"}, floats by bit pattern.

Usage: python3 fixtures/tools/reference.py   (requires `pip install wasmtime`)
"""

import json
import math
import pathlib
import struct
import sys

import wasmtime

FIXTURES = pathlib.Path(__file__).resolve().parent.parent

TRAP_KINDS = {
    "UNREACHABLE": "unreachable",
    "INTEGER_DIVISION_BY_ZERO": "divide-by-zero",
    "INTEGER_OVERFLOW": "integer-overflow",
    "BAD_CONVERSION_TO_INTEGER": "integer-overflow",
    "MEMORY_OUT_OF_BOUNDS": "out-of-bounds-memory",
    "HEAP_MISALIGNED": "out-of-bounds-memory",
    "TABLE_OUT_OF_BOUNDS": "out-of-bounds-table",
    "INDIRECT_CALL_TO_NULL": "undefined-table-element",
    "BAD_SIGNATURE": "indirect-call-type-mismatch",
    "STACK_OVERFLOW": "stack-exhausted",
}

TRAP_MESSAGES = [
    ("unreachable", "unreachable"),
    ("divide by zero", "divide-by-zero"),
    ("integer overflow", "integer-overflow"),
    ("invalid conversion to integer", "integer-overflow"),
    ("out of bounds memory access", "out-of-bounds-memory"),
    ("out of bounds table access", "out-of-bounds-table"),
    ("undefined element", "undefined-table-element"),
    ("uninitialized element", "undefined-table-element"),
    ("indirect call type mismatch", "indirect-call-type-mismatch"),
    ("call stack exhausted", "stack-exhausted"),
]


class HostAbort(Exception):
    """Raised by env.abort; recorded as an `unreachable` trap."""


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def trap_kind(err):
    if isinstance(err, HostAbort):
        return "unreachable"
    code = getattr(err, "trap_code", None)
    if code is not None and code.name in TRAP_KINDS:
        return TRAP_KINDS[code.name]
    text = str(err)
    for needle, kind in TRAP_MESSAGES:
        if needle in text:
            return kind
    if isinstance(err.__cause__ or err.__context__, HostAbort) or "HostAbort" in text:
        return "unreachable"
    raise RuntimeError(f"unrecognized trap: {text}")


def parse_arg(arg):
    ((ty, v),) = arg.items()
    if ty == "i32":
        return ty, int(v)
    if ty == "i64":
        return ty, int(v)
    if isinstance(v, str):
        return ty, {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}[v]
    return ty, float(v)


def show(ty, v):
    if ty == "i32":
        return {"i32": struct.unpack("<i", struct.pack("<I", v & 0xFFFFFFFF))[0]}
    if ty == "i64":
        return {"i64": str(struct.unpack("<q", struct.pack("<Q", v & 0xFFFFFFFFFFFFFFFF))[0])}
    if ty == "f32":
        return {"f32": "0x%08x" % struct.unpack("<I", struct.pack("<f", v))[0]}
    return {"f64": "0x%016x" % struct.unpack("<Q", struct.pack("<d", v))[0]}


def val_name(vt):
    return str(vt)


def run_fixture(name):
    wat = (FIXTURES / f"{name}.wat").read_text()
    wasm = bytes(wasmtime.wat2wasm(wat))
    (FIXTURES / f"{name}.wasm").write_bytes(wasm)
    workload = json.loads((FIXTURES / f"{name}.workload.json").read_text())

    config = wasmtime.Config()
    config.cranelift_nan_canonicalization = True
    engine = wasmtime.Engine(config)
    store = wasmtime.Store(engine)
    module = wasmtime.Module(engine, wasm)
    calls = []

    def log(x):
        calls.append({"import": "env.log", "args": [show("i32", x)]})

    def log64(x):
        calls.append({"import": "env.log64", "args": [show("i64", x)]})

    def abort():
        calls.append({"import": "env.abort", "args": []})
        raise HostAbort()

    linker = wasmtime.Linker(engine)
    i32, i64 = wasmtime.ValType.i32(), wasmtime.ValType.i64()
    linker.define_func("env", "log", wasmtime.FuncType([i32], []), log)
    linker.define_func("env", "log64", wasmtime.FuncType([i64], []), log64)
    linker.define_func("env", "abort", wasmtime.FuncType([], []), abort)

    expected = {"instantiation": "ok", "startHostCalls": [], "invocations": [], "memoryDigest": None}
    imports_known = all(
        imp.module == "env" and imp.name in ("log", "log64", "abort") for imp in module.imports
    )
    if not imports_known:
        missing = [f"{i.module}.{i.name}" for i in module.imports]
        expected["instantiation"] = {"linkError": "unknown import " + missing[0]}
        return expected
    try:
        instance = linker.instantiate(store, module)
    except Exception as err:  # noqa: BLE001 - any trap during instantiation
        expected["instantiation"] = {"trap": trap_kind(err)}
        expected["startHostCalls"] = calls[:]
        return expected
    expected["startHostCalls"] = calls[:]
    calls.clear()

    exports = instance.exports(store)
    for inv in workload["invocations"]:
        func = exports[inv["func"]]
        ty = func.type(store)
        args = [parse_arg(a)[1] for a in inv["args"]]
        try:
            out = func(store, *args)
            result_types = [val_name(r) for r in ty.results]
            if not result_types:
                values = []
            elif len(result_types) == 1:
                values = [show(result_types[0], out)]
            else:
                values = [show(t, v) for t, v in zip(result_types, out)]
            outcome = {"results": values}
        except Exception as err:  # noqa: BLE001 - traps and host aborts
            outcome = {"trap": trap_kind(err)}
        expected["invocations"].append({"outcome": outcome, "hostCalls": calls[:]})
        calls.clear()

    try:
        memory = exports["memory"]
    except KeyError:
        memory = None
    if isinstance(memory, wasmtime.Memory):
        data = bytes(memory.read(store, 0, memory.data_len(store)))
        expected["memoryDigest"] = "%016x" % fnv1a64(data)
    return expected


def main():
    names = sorted(p.stem for p in FIXTURES.glob("*.wat"))
    if len(sys.argv) > 1:
        names = sys.argv[1:]
    for name in names:
        expected = run_fixture(name)
        path = FIXTURES / f"{name}.expected.json"
        path.write_text(json.dumps(expected, indent=2) + "\n")
        print(f"{name}: {len(expected['invocations'])} invocations")


if __name__ == "__main__":
    main()
