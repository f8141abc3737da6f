"""Transcript serialization: DOCX (minimal WordprocessingML package), TXT and JSON."""
from __future__ import annotations

import enum
import io
import json
import zipfile
from dataclasses import dataclass
from typing import Optional
from xml.sax.saxutils import escape

from .errors import InvalidParameter
from .recognizer import FinalSegment, Hypothesis, Transcript, WordResult

W_NS = "http://schemas.openxmlformats.org/wordprocessingml/2006/main"
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)

CONTENT_TYPES = (
    '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
    '<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types">'
    '<Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/>'
    '<Default Extension="xml" ContentType="application/xml"/>'
    '<Override PartName="/word/document.xml" '
    'ContentType="application/vnd.openxmlformats-officedocument.wordprocessingml.document.main+xml"/>'
    "</Types>"
)

ROOT_RELS = (
    '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
    '<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships">'
    '<Relationship Id="rId1" '
    'Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument" '
    'Target="word/document.xml"/>'
    "</Relationships>"
)


class ExportFormat(str, enum.Enum):
    DOCX = "docx"
    TXT = "txt"
    JSON = "json"


@dataclass(frozen=True)
class ExportOptions:
    format: ExportFormat = ExportFormat.DOCX
    include_timestamps: bool = False
    title: Optional[str] = None


def format_timestamp(seconds: float) -> str:
    total = int(seconds)
    return f"[{total // 60}:{total % 60:02d}] "


def _lines(t: Transcript, timestamps: bool) -> list:
    lines = []
    for seg in t.segments:
        prefix = format_timestamp(seg.t_start) if timestamps else ""
        lines.append(prefix + seg.text)
    return lines


def _paragraph(text: str, bold: bool = False) -> str:
    props = "<w:rPr><w:b/></w:rPr>" if bold else ""
    return f'<w:p><w:r>{props}<w:t xml:space="preserve">{escape(text)}</w:t></w:r></w:p>'


def document_xml(t: Transcript, opts: ExportOptions = ExportOptions()) -> str:
    body = []
    if opts.title:
        body.append(_paragraph(opts.title, bold=True))
    body.extend(_paragraph(line) for line in _lines(t, opts.include_timestamps))
    return (
        '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
        f'<w:document xmlns:w="{W_NS}"><w:body>{"".join(body)}<w:sectPr/></w:body></w:document>'
    )


def to_docx(t: Transcript, opts: ExportOptions = ExportOptions()) -> bytes:
    parts = [
        ("[Content_Types].xml", CONTENT_TYPES),
        ("_rels/.rels", ROOT_RELS),
        ("word/document.xml", document_xml(t, opts)),
    ]
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name, text in parts:
            info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            info.create_system = 0
            zf.writestr(info, text.encode("utf-8"))
    return buf.getvalue()


def to_txt(t: Transcript, opts: ExportOptions = ExportOptions(format=ExportFormat.TXT)) -> str:
    lines = _lines(t, opts.include_timestamps)
    return "".join(line + "\n" for line in lines)


def _num(x: float) -> float:
    return round(float(x), 6)


def to_json(t: Transcript) -> str:
    obj = {
        "source": t.source,
        "model_id": t.model_id,
        "segments": [
            {
                "t_start": _num(seg.t_start),
                "t_end": _num(seg.t_end),
                "text": seg.text,
                "words": [
                    {"word": w.text, "start": _num(w.t_start), "end": _num(w.t_end),
                     "conf": _num(w.confidence)}
                    for w in seg.words
                ],
            }
            for seg in t.segments
        ],
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def from_json(text: str) -> Transcript:
    """Inverse of :func:`to_json`; n-best lists collapse to the exported words."""
    obj = json.loads(text)
    segments = []
    for seg in obj["segments"]:
        words = [WordResult(w["word"], w["start"], w["end"], w["conf"]) for w in seg["words"]]
        hyp = Hypothesis(tuple(w.text for w in words), 0.0, tuple(w.confidence for w in words))
        segments.append(FinalSegment(words, [hyp], seg["t_start"], seg["t_end"]))
    return Transcript(segments, obj["source"], obj["model_id"])


def render(t: Transcript, opts: ExportOptions) -> bytes:
    if opts.format is ExportFormat.DOCX:
        return to_docx(t, opts)
    if opts.format is ExportFormat.TXT:
        return to_txt(t, opts).encode("utf-8")
    if opts.format is ExportFormat.JSON:
        return (to_json(t) + "\n").encode("utf-8")
    raise InvalidParameter(f"unknown export format {opts.format!r}")
