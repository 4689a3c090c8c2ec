"""Build synthetic class files and archives for fixtures and experiments.

The emitted classes carry no bytecode; they are valid enough for metadata
readers, not for a JVM to load.
"""
from __future__ import annotations

import io
import struct
import zipfile
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

ACC_PUBLIC = 0x0001
ACC_SUPER = 0x0020
ACC_INTERFACE = 0x0200
ACC_ABSTRACT = 0x0400


@dataclass
class ClassSpec:
    fqn: str
    kind: str = "class"  # class | abstract | interface
    methods: tuple[str, ...] = ()
    fields: tuple[str, ...] = ()
    superclass: str = "java.lang.Object"
    extra_constants: bool = True


@dataclass
class _Pool:
    entries: list[bytes] = field(default_factory=list)
    index: dict[bytes, int] = field(default_factory=dict)
    next_slot: int = 1

    def _add(self, raw: bytes, wide: bool = False) -> int:
        if raw in self.index:
            return self.index[raw]
        slot = self.next_slot
        self.entries.append(raw)
        self.index[raw] = slot
        self.next_slot += 2 if wide else 1
        return slot

    def utf8(self, text: str) -> int:
        data = text.encode("utf-8")
        return self._add(b"\x01" + struct.pack(">H", len(data)) + data)

    def klass(self, internal: str) -> int:
        return self._add(b"\x07" + struct.pack(">H", self.utf8(internal)))

    def long(self, value: int) -> int:
        return self._add(b"\x05" + struct.pack(">q", value), wide=True)

    def double(self, value: float) -> int:
        return self._add(b"\x06" + struct.pack(">d", value), wide=True)

    def integer(self, value: int) -> int:
        return self._add(b"\x03" + struct.pack(">i", value))

    def string(self, text: str) -> int:
        return self._add(b"\x08" + struct.pack(">H", self.utf8(text)))

    def name_and_type(self, name: str, desc: str) -> int:
        return self._add(b"\x0c" + struct.pack(">HH", self.utf8(name), self.utf8(desc)))

    def methodref(self, owner: str, name: str, desc: str) -> int:
        return self._add(b"\x0a" + struct.pack(">HH", self.klass(owner), self.name_and_type(name, desc)))


def _internal(fqn: str) -> str:
    return fqn.replace(".", "/")


def class_bytes(spec: ClassSpec, major: int = 52) -> bytes:
    pool = _Pool()
    this_i = pool.klass(_internal(spec.fqn))
    super_i = pool.klass(_internal(spec.superclass))
    if spec.extra_constants:
        # exercise wide and miscellaneous constant kinds
        pool.long(1 << 40)
        pool.double(2.5)
        pool.integer(7)
        pool.string("fixture")
        pool.methodref("java/lang/Object", "<init>", "()V")
    flags = ACC_PUBLIC
    if spec.kind == "interface":
        flags |= ACC_INTERFACE | ACC_ABSTRACT
    elif spec.kind == "abstract":
        flags |= ACC_ABSTRACT | ACC_SUPER
    else:
        flags |= ACC_SUPER
    field_entries = [(ACC_PUBLIC, pool.utf8(n), pool.utf8("I")) for n in spec.fields]
    method_flags = ACC_PUBLIC | (ACC_ABSTRACT if spec.kind == "interface" else 0)
    method_entries = [(method_flags, pool.utf8(n), pool.utf8("()V")) for n in spec.methods]
    if spec.kind != "interface":
        method_entries.insert(0, (ACC_PUBLIC, pool.utf8("<init>"), pool.utf8("()V")))

    out = io.BytesIO()
    out.write(struct.pack(">IHH", 0xCAFEBABE, 0, major))
    out.write(struct.pack(">H", pool.next_slot))
    for raw in pool.entries:
        out.write(raw)
    out.write(struct.pack(">HHH", flags, this_i, super_i))
    out.write(struct.pack(">H", 0))  # interfaces
    for table in (field_entries, method_entries):
        out.write(struct.pack(">H", len(table)))
        for acc, name_i, desc_i in table:
            out.write(struct.pack(">HHHH", acc, name_i, desc_i, 0))
    out.write(struct.pack(">H", 0))  # class attributes
    return out.getvalue()


def write_archive(path: Path | str, classes: list[ClassSpec], date: datetime | None = None,
                  extra_entries: dict[str, bytes] | None = None) -> Path:
    """Write a jar-like ZIP; ``date=None`` leaves entries at the DOS epoch (no usable date)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stamp = (date.year, date.month, date.day, date.hour, date.minute, date.second) if date else (1980, 1, 1, 0, 0, 0)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        manifest = zipfile.ZipInfo("META-INF/MANIFEST.MF", date_time=stamp)
        zf.writestr(manifest, b"Manifest-Version: 1.0\r\n\r\n")
        for spec in classes:
            info = zipfile.ZipInfo(_internal(spec.fqn) + ".class", date_time=stamp)
            zf.writestr(info, class_bytes(spec))
        for name, data in (extra_entries or {}).items():
            zf.writestr(zipfile.ZipInfo(name, date_time=stamp), data)
    return path
