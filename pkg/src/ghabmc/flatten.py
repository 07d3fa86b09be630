"""Subsystem elimination.

Subsystem blocks are replaced by their inner blocks, ids prefixed with the
subsystem path (`A/B/Gain`). Lines crossing a boundary are spliced so each
atomic in-port is driven straight from an atomic out-port; the subsystem's own
Inport/Outport shells disappear.
"""

from __future__ import annotations

from dataclasses import replace

from .model import Block, Gha, Line, SlState, block_arity, subsystem_inports, subsystem_outports


class FlattenError(ValueError):
    pass


def _has_subsystem(blocks) -> bool:
    return any(b.kind == "Subsystem" for b in blocks)


def flatten_state(s: SlState) -> SlState:
    if not _has_subsystem(s.blocks):
        return s
    atomic: list[Block] = []
    driver: dict[tuple, tuple] = {}
    sinks: list[tuple] = []
    _collect(s.blocks, s.lines, "", atomic, driver, sinks)

    lines: dict[tuple, list[tuple]] = {}
    for sink in sinks:
        src = _resolve(sink, driver)
        lines.setdefault(src, []).append(sink)
    flat_lines = tuple(
        Line(src, tuple((b, p) for b, p in dsts)) for src, dsts in lines.items()
    )
    return replace(s, blocks=tuple(atomic), lines=flat_lines)


def _collect(blocks, lines, prefix, atomic, driver, sinks) -> None:
    """Record every sink's immediate driver; virtual nodes mark subsystem boundaries.

    A subsystem at path P exposes ("in", P, p) inside for its p-th input and
    ("out", P, p) outside for its p-th output.
    """
    by_id = {b.id: b for b in blocks}
    inner_in: dict[str, int] = {}
    inner_out: dict[str, int] = {}
    in_sub = bool(prefix)
    for b in blocks:
        path = prefix + b.id
        if b.kind == "Subsystem":
            ins = subsystem_inports(b)
            outs = subsystem_outports(b)
            _collect(b.blocks, b.lines, path + "/", atomic, driver, sinks)
            for idx, port_block in enumerate(ins, start=1):
                # inner Inport block becomes the virtual source of input idx
                driver[("alias", path + "/" + port_block.id)] = ("in", path, idx)
            for idx, port_block in enumerate(outs, start=1):
                driver[("out", path, idx)] = ("sinkof", path + "/" + port_block.id)
        elif in_sub and b.kind == "Inport":
            inner_in[b.id] = 1
        elif in_sub and b.kind == "Outport":
            inner_out[b.id] = 1
        else:
            atomic.append(replace(b, id=path))
            for p in range(1, block_arity(b)[0] + 1):
                sinks.append((path, p))

    for ln in lines:
        sid, sp = ln.src
        src_block = by_id.get(sid)
        if src_block is None:
            raise FlattenError(f"line source {prefix}{sid} references unknown block")
        if src_block.kind == "Subsystem":
            if sp > len(subsystem_outports(src_block)):
                raise FlattenError(
                    f"port-arity mismatch: {prefix}{sid} has no output {sp}")
            src = ("out", prefix + sid, sp)
        elif sid in inner_in:
            src = ("alias", prefix + sid)
        else:
            src = (prefix + sid, sp)
        for did, dp in ln.dsts:
            dst_block = by_id.get(did)
            if dst_block is None:
                raise FlattenError(f"line destination {prefix}{did} references unknown block")
            if dst_block.kind == "Subsystem":
                if dp > len(subsystem_inports(dst_block)):
                    raise FlattenError(
                        f"port-arity mismatch: {prefix}{did} has no input {dp}")
                key = ("in", prefix + did, dp)
            elif did in inner_out:
                key = ("sinkof", prefix + did)
            else:
                key = (prefix + did, dp)
            if key in driver:
                raise FlattenError(f"{_show(key)} has more than one driver")
            driver[key] = src


def _show(node: tuple) -> str:
    if len(node) == 2 and isinstance(node[1], int):
        return f"{node[0]}.{node[1]}"
    return "/".join(str(x) for x in node[1:])


def _resolve(sink: tuple, driver: dict) -> tuple[str, int]:
    seen = set()
    node = driver.get(sink)
    if node is None:
        raise FlattenError(f"in-port {_show(sink)} is not driven")
    while node[0] in ("alias", "in", "out", "sinkof"):
        if node in seen:
            raise FlattenError(f"boundary wiring loop at {_show(node)}")
        seen.add(node)
        nxt = driver.get(node)
        if nxt is None:
            raise FlattenError(f"subsystem port {_show(node)} is not driven")
        node = nxt
    return node


def flatten_gha(m: Gha) -> Gha:
    return replace(m, states=tuple(flatten_state(s) for s in m.states))


def is_flat(m: Gha) -> bool:
    return not any(_has_subsystem(s.blocks) for s in m.states)
