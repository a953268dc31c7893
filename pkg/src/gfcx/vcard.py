"""vCard 3.0 export for received contact cards.

Standard kinds map onto standard vCard properties. Network handles and
custom kinds become X-GFC-* extension lines so nothing is dropped. Output
uses CRLF line endings and always carries at least one FN property (a
placeholder when the card has no name field).
"""

from __future__ import annotations

from .profiles import ContactCard, ProfileField

PLACEHOLDER_FN = "Unknown"

_STANDARD_PROPS = {
    "NAME": "FN",
    "MOBILENUMBER": "TEL;TYPE=CELL",
    "EMAIL": "EMAIL",
    "ORGANIZATION": "ORG",
    "WEBSITE": "URL",
    "TITLE": "TITLE",
    "NOTE": "NOTE",
}


def _escape(value: str) -> str:
    # TEXT escaping per the 3.0 grammar; values never contain newlines.
    return value.replace("\\", "\\\\").replace(";", "\\;").replace(",", "\\,")


def _render_field(field: ProfileField) -> str:
    kind = field.kind
    value = _escape(field.value)
    prop = _STANDARD_PROPS.get(kind.name)
    if prop is not None:
        return f"{prop}:{value}"
    if kind.name == "ADDRESS":
        # Whole address into the street component of the structured value.
        return f"ADR;TYPE=HOME:;;{value};;;;"
    if kind.name == "CUSTOM":
        return f'X-GFC-CUSTOM;X-LABEL="{kind.label}":{value}'
    return f"X-GFC-{kind.name}:{value}"


def export_vcard(card: ContactCard) -> str:
    fields = card.profile_snapshot.fields
    lines = ["BEGIN:VCARD", "VERSION:3.0"]
    if not any(f.kind.name == "NAME" for f in fields):
        lines.append(f"FN:{PLACEHOLDER_FN}")
    lines.extend(_render_field(f) for f in fields)
    lines.append("END:VCARD")
    return "\r\n".join(lines) + "\r\n"
