"""URDF-subset reader/writer and the linkage sidecar config.

URDF describes the ankle as two serial revolute joints (pitch, then roll);
the closed linkage that actually drives them cannot be expressed there and is
loaded from a JSON sidecar instead (see :mod:`lips.geometry`).

Supported subset: ``robot``, ``link``, ``joint`` (types ``revolute`` and
``fixed``) with ``origin``, ``axis``, ``limit``, ``parent``, ``child``.
``visual``, ``collision`` and ``inertial`` are ignored, as is any other
unknown element. Unknown attributes on supported elements are rejected.
Documents carrying a DOCTYPE, namespaces or entities other than the five
predefined ones are rejected.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from .errors import BindError, LoopError, SchemaError, UrdfSyntaxError
from .geometry import AnkleGeometry, geometry_from_mapping, validate_geometry

JOINT_TYPES = ("revolute", "fixed")
AXIS_TOL = 1e-6
PITCH_AXIS = (0.0, 1.0, 0.0)
ROLL_AXIS = (1.0, 0.0, 0.0)

_ATTRS = {
    "robot": {"name"},
    "link": {"name"},
    "joint": {"name", "type"},
    "origin": {"xyz", "rpy"},
    "axis": {"xyz"},
    "limit": {"lower", "upper", "effort", "velocity"},
    "parent": {"link"},
    "child": {"link"},
}


@dataclass(frozen=True)
class Origin:
    xyz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rpy: tuple[float, float, float] = (0.0, 0.0, 0.0)  # fixed-axis roll, pitch, yaw


@dataclass(frozen=True)
class Limit:
    lower: float = 0.0
    upper: float = 0.0
    effort: Optional[float] = None
    velocity: Optional[float] = None


@dataclass(frozen=True)
class Joint:
    name: str
    type: str
    parent: str
    child: str
    origin: Origin = Origin()
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    limit: Optional[Limit] = None


@dataclass(frozen=True)
class AnkleBinding:
    pitch_joint: str
    roll_joint: str
    geometry: AnkleGeometry


@dataclass(frozen=True)
class RobotModel:
    name: str
    links: tuple[str, ...] = ()
    joints: tuple[Joint, ...] = ()
    ankle_bindings: Mapping[str, AnkleBinding] = field(default_factory=lambda: MappingProxyType({}))

    def joint(self, name: str) -> Joint:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    def structure(self) -> tuple:
        """Everything the URDF text carries; used for round-trip comparison."""
        return (self.name, self.links, self.joints)


# -- parsing --------------------------------------------------------------------------


def _check_attrs(el: ET.Element, required=()) -> None:
    allowed = _ATTRS[el.tag]
    for key in el.attrib:
        if key.startswith("{") or ":" in key:
            raise UrdfSyntaxError(f"namespaced attribute '{key}' on <{el.tag}> is outside the supported subset")
        if key not in allowed:
            raise SchemaError(f"unknown attribute '{key}' on <{el.tag}>")
    for key in required:
        if key not in el.attrib:
            raise SchemaError(f"<{el.tag}> is missing required attribute '{key}'")


def _floats(el: ET.Element, key: str, n: int, default=None) -> tuple:
    raw = el.get(key)
    if raw is None:
        if default is None:
            raise SchemaError(f"<{el.tag}> is missing required attribute '{key}'")
        return default
    parts = raw.split()
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise SchemaError(f"<{el.tag} {key}='{raw}'> is not a list of numbers") from None
    if len(vals) != n or not all(math.isfinite(v) for v in vals):
        raise SchemaError(f"<{el.tag} {key}='{raw}'> needs {n} finite numbers")
    return vals


def _float(el: ET.Element, key: str, default=None):
    raw = el.get(key)
    if raw is None:
        return default
    try:
        v = float(raw)
    except ValueError:
        raise SchemaError(f"<{el.tag} {key}='{raw}'> is not a number") from None
    if not math.isfinite(v):
        raise SchemaError(f"<{el.tag} {key}='{raw}'> is not finite")
    return v


def _unit(axis, joint_name: str) -> tuple:
    n = math.sqrt(sum(a * a for a in axis))
    if n == 0.0:
        raise SchemaError(f"joint '{joint_name}' has a zero axis")
    return tuple(a / n for a in axis)


def _single(el: ET.Element, tag: str, joint_name: str):
    found = el.findall(tag)
    if len(found) > 1:
        raise SchemaError(f"joint '{joint_name}' has more than one <{tag}>")
    return found[0] if found else None


def _parse_joint(el: ET.Element) -> Joint:
    _check_attrs(el, ("name", "type"))
    name, jtype = el.get("name"), el.get("type")
    if jtype not in JOINT_TYPES:
        raise SchemaError(f"joint '{name}' has unsupported type '{jtype}' (supported: {', '.join(JOINT_TYPES)})")
    refs = {}
    for tag in ("parent", "child"):
        ref = _single(el, tag, name)
        if ref is None:
            raise SchemaError(f"joint '{name}' is missing <{tag}>")
        _check_attrs(ref, ("link",))
        refs[tag] = ref.get("link")
    origin = Origin()
    o = _single(el, "origin", name)
    if o is not None:
        _check_attrs(o)
        origin = Origin(_floats(o, "xyz", 3, (0.0, 0.0, 0.0)), _floats(o, "rpy", 3, (0.0, 0.0, 0.0)))
    axis = (1.0, 0.0, 0.0)
    a = _single(el, "axis", name)
    if a is not None:
        _check_attrs(a, ("xyz",))
        axis = _unit(_floats(a, "xyz", 3), name)
    limit = None
    lim = _single(el, "limit", name)
    if lim is not None:
        _check_attrs(lim)
        limit = Limit(_float(lim, "lower", 0.0), _float(lim, "upper", 0.0), _float(lim, "effort"), _float(lim, "velocity"))
        if limit.lower > limit.upper:
            raise SchemaError(f"joint '{name}' has lower limit {limit.lower} above upper {limit.upper}")
    return Joint(name, jtype, refs["parent"], refs["child"], origin, axis, limit)


def _check_tree(links, joints) -> None:
    parent_of = {}
    for j in joints:
        if j.parent == j.child:
            raise LoopError(f"joint '{j.name}' connects link '{j.child}' to itself")
        if j.child in parent_of:
            raise LoopError(
                f"joint '{j.name}' closes a loop: link '{j.child}' is already the child of joint '{parent_of[j.child][0]}'"
            )
        parent_of[j.child] = (j.name, j.parent)
    # with one parent per link, any cycle is found by walking up the parents
    for j in joints:
        seen = {j.child}
        link = j.parent
        while link in parent_of:
            if link in seen:
                raise LoopError(f"joint '{j.name}' is part of a cycle through link '{link}'")
            seen.add(link)
            link = parent_of[link][1]


def _reject_dtd(text: str) -> None:
    if "<!DOCTYPE" in text or "<!ENTITY" in text:
        raise UrdfSyntaxError("DOCTYPE/ENTITY declarations are outside the supported subset")


def parse_urdf_subset(text: str) -> RobotModel:
    """Parse URDF text into a :class:`RobotModel`.

    Raises:
        UrdfSyntaxError: malformed XML or constructs outside the subset.
        SchemaError: missing/unknown attributes, bad values, dangling links.
        LoopError: the joint graph is not a tree; names the offending joint.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    _reject_dtd(text)
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise UrdfSyntaxError(f"malformed XML: {exc}") from None
    for el in root.iter():
        if not isinstance(el.tag, str):
            continue
        if el.tag.startswith("{"):
            raise UrdfSyntaxError(f"namespaced element '{el.tag}' is outside the supported subset")
    if root.tag != "robot":
        raise SchemaError(f"root element must be <robot>, got <{root.tag}>")
    _check_attrs(root, ("name",))

    links, joints = [], []
    for el in root:
        if el.tag == "link":
            _check_attrs(el, ("name",))
            links.append(el.get("name"))
        elif el.tag == "joint":
            joints.append(_parse_joint(el))
        # anything else (materials, transmissions, vendor extensions) is skipped

    for kind, names in (("link", links), ("joint", [j.name for j in joints])):
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise SchemaError(f"duplicate {kind} name(s): {', '.join(dup)}")
    known = set(links)
    for j in joints:
        for ref in (j.parent, j.child):
            if ref not in known:
                raise SchemaError(f"joint '{j.name}' references unknown link '{ref}'")
    _check_tree(links, joints)
    return RobotModel(root.get("name"), tuple(links), tuple(joints))


# -- serialisation --------------------------------------------------------------------


def _fmt(vals) -> str:
    return " ".join(repr(float(v)) for v in vals)


def serialize_urdf(model: RobotModel) -> str:
    """Write the subset back out; ``parse_urdf_subset`` of the result has the
    same :meth:`RobotModel.structure`. Ankle bindings are not part of URDF."""
    root = ET.Element("robot", {"name": model.name})
    for name in model.links:
        ET.SubElement(root, "link", {"name": name})
    for j in model.joints:
        el = ET.SubElement(root, "joint", {"name": j.name, "type": j.type})
        ET.SubElement(el, "parent", {"link": j.parent})
        ET.SubElement(el, "child", {"link": j.child})
        ET.SubElement(el, "origin", {"xyz": _fmt(j.origin.xyz), "rpy": _fmt(j.origin.rpy)})
        ET.SubElement(el, "axis", {"xyz": _fmt(j.axis)})
        if j.limit is not None:
            attrs = {"lower": repr(j.limit.lower), "upper": repr(j.limit.upper)}
            if j.limit.effort is not None:
                attrs["effort"] = repr(j.limit.effort)
            if j.limit.velocity is not None:
                attrs["velocity"] = repr(j.limit.velocity)
            ET.SubElement(el, "limit", attrs)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def model_to_dict(model: RobotModel) -> dict:
    """JSON-ready dump of the model."""
    joints = []
    for j in model.joints:
        d = {
            "name": j.name,
            "type": j.type,
            "parent": j.parent,
            "child": j.child,
            "origin": {"xyz": list(j.origin.xyz), "rpy": list(j.origin.rpy)},
            "axis": list(j.axis),
        }
        if j.limit is not None:
            d["limit"] = {k: v for k, v in vars(j.limit).items() if v is not None}
        joints.append(d)
    out = {"name": model.name, "links": list(model.links), "joints": joints}
    if model.ankle_bindings:
        out["ankle_bindings"] = {
            k: {"pitch_joint": b.pitch_joint, "roll_joint": b.roll_joint, "geometry": b.geometry.to_dict()}
            for k, b in sorted(model.ankle_bindings.items())
        }
    return out


# -- linkage sidecar and binding --------------------------------------------------------


def load_linkage_config(text: str) -> AnkleGeometry:
    """Parse and validate the JSON linkage config.

    Raises:
        SchemaError: invalid JSON, missing or unknown keys, bad values.
        InvalidGeometry, InfeasibleWorkspace: see :func:`validate_geometry`.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"linkage config is not valid JSON: {exc}") from None
    geom = geometry_from_mapping(data)
    validate_geometry(geom)
    return geom


def _axis_error(axis, expected) -> float:
    return float(np.max(np.abs(np.asarray(axis) - np.asarray(expected))))


def bind_ankle(model: RobotModel, pitch_joint_name: str, roll_joint_name: str, geom: AnkleGeometry, name: str = "ankle") -> RobotModel:
    """Attach a linkage geometry to a serial pitch/roll joint pair.

    Raises:
        BindError: a joint is missing, not revolute, or its axis is off by
            more than 1e-6 from (0, 1, 0) for pitch or (1, 0, 0) for roll.
    """
    for role, jname, expected in (("pitch", pitch_joint_name, PITCH_AXIS), ("roll", roll_joint_name, ROLL_AXIS)):
        try:
            j = model.joint(jname)
        except KeyError:
            raise BindError(f"{role} joint '{jname}' does not exist") from None
        if j.type != "revolute":
            raise BindError(f"{role} joint '{jname}' is {j.type}, expected revolute")
        err = _axis_error(j.axis, expected)
        if err > AXIS_TOL:
            raise BindError(
                f"{role} joint '{jname}' axis {tuple(round(a, 9) for a in j.axis)} differs from {expected} by {err:.3g}"
            )
    bindings = dict(model.ankle_bindings)
    bindings[name] = AnkleBinding(pitch_joint_name, roll_joint_name, geom)
    return replace(model, ankle_bindings=MappingProxyType(bindings))
