"""Minimal JVM class-file reader.

Reads just enough of the format to list a class's name, access flags,
superclass, and declared method and field names.  Layout reference: JVM
specification, chapter 4 ("The class File Format").
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from ..errors import ClassParseError

MAGIC = 0xCAFEBABE

ACC_PUBLIC = 0x0001
ACC_FINAL = 0x0010
ACC_SUPER = 0x0020
ACC_BRIDGE = 0x0040
ACC_INTERFACE = 0x0200
ACC_ABSTRACT = 0x0400
ACC_SYNTHETIC = 0x1000
ACC_ANNOTATION = 0x2000
ACC_ENUM = 0x4000
ACC_MODULE = 0x8000

# tag -> payload size in bytes; Utf8 (1) is variable-length
_CP_SIZES = {
    3: 4,   # Integer
    4: 4,   # Float
    5: 8,   # Long
    6: 8,   # Double
    7: 2,   # Class
    8: 2,   # String
    9: 4,   # Fieldref
    10: 4,  # Methodref
    11: 4,  # InterfaceMethodref
    12: 4,  # NameAndType
    15: 3,  # MethodHandle
    16: 2,  # MethodType
    17: 4,  # Dynamic
    18: 4,  # InvokeDynamic
    19: 2,  # Module
    20: 2,  # Package
}
_WIDE = {5, 6}


@dataclass(frozen=True)
class MemberInfo:
    name: str
    descriptor: str
    access_flags: int

    @property
    def synthetic(self) -> bool:
        return bool(self.access_flags & (ACC_SYNTHETIC | ACC_BRIDGE))


@dataclass(frozen=True)
class ClassInfo:
    internal_name: str
    access_flags: int
    super_name: str | None
    interfaces: tuple[str, ...]
    fields: tuple[MemberInfo, ...]
    methods: tuple[MemberInfo, ...]
    major_version: int

    @property
    def is_interface(self) -> bool:
        return bool(self.access_flags & (ACC_INTERFACE | ACC_ANNOTATION))

    @property
    def is_abstract(self) -> bool:
        return bool(self.access_flags & ACC_ABSTRACT)

    @property
    def is_module(self) -> bool:
        return bool(self.access_flags & ACC_MODULE)

    @property
    def is_concrete(self) -> bool:
        return not (self.is_interface or self.is_abstract or self.is_module)

    @property
    def fqn(self) -> str:
        """Source-level name: ``a/b/Outer$Inner`` becomes ``a.b.Outer.Inner``."""
        return self.internal_name.replace("/", ".").replace("$", ".")

    @property
    def is_anonymous_or_local(self) -> bool:
        # javac names these Outer$1, Outer$1Local
        simple = self.internal_name.rsplit("/", 1)[-1]
        return any(part[:1].isdigit() for part in simple.split("$")[1:])

    def method_names(self) -> set[str]:
        return {m.name for m in self.methods if not m.synthetic and not m.name.startswith("<")}

    def field_names(self) -> set[str]:
        return {f.name for f in self.fields if not f.synthetic}


def _decode_mutf8(data: bytes) -> str:
    # modified UTF-8: NUL as C0 80, supplementary chars as surrogate pairs
    try:
        text = data.replace(b"\xc0\x80", b"\x00").decode("utf-8", errors="surrogatepass")
        return text.encode("utf-16", "surrogatepass").decode("utf-16")
    except UnicodeError as exc:
        raise ClassParseError(f"bad modified UTF-8 constant: {exc}") from exc


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise ClassParseError("truncated class file")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u1(self) -> int:
        return self.take(1)[0]

    def u2(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u4(self) -> int:
        return struct.unpack(">I", self.take(4))[0]


def parse_class(data: bytes) -> ClassInfo:
    r = _Reader(data)
    if r.u4() != MAGIC:
        raise ClassParseError("bad magic number")
    _minor, major = r.u2(), r.u2()
    count = r.u2()
    utf8: dict[int, str] = {}
    class_refs: dict[int, int] = {}
    idx = 1
    while idx < count:
        tag = r.u1()
        if tag == 1:
            utf8[idx] = _decode_mutf8(r.take(r.u2()))
        elif tag == 7:
            class_refs[idx] = r.u2()
        elif tag in _CP_SIZES:
            r.take(_CP_SIZES[tag])
        else:
            raise ClassParseError(f"unknown constant pool tag {tag} at index {idx}")
        idx += 2 if tag in _WIDE else 1

    def utf(i: int) -> str:
        try:
            return utf8[i]
        except KeyError:
            raise ClassParseError(f"constant {i} is not Utf8") from None

    def class_name(i: int) -> str:
        try:
            return utf(class_refs[i])
        except KeyError:
            raise ClassParseError(f"constant {i} is not a Class") from None

    access = r.u2()
    this_name = class_name(r.u2())
    super_idx = r.u2()
    super_name = class_name(super_idx) if super_idx else None
    interfaces = tuple(class_name(r.u2()) for _ in range(r.u2()))

    def members() -> tuple[MemberInfo, ...]:
        out = []
        for _ in range(r.u2()):
            flags, name_i, desc_i = r.u2(), r.u2(), r.u2()
            for _ in range(r.u2()):
                r.u2()
                r.take(r.u4())
            out.append(MemberInfo(utf(name_i), utf(desc_i), flags))
        return tuple(out)

    fields = members()
    methods = members()
    return ClassInfo(this_name, access, super_name, interfaces, fields, methods, major)
