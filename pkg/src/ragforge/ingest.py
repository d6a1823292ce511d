"""Document conversion and chunking.

Takes the outputs of external parsers (HTML-like structured markup, plus an
optional higher-quality clean-text rendering of the same document), merges
them into structure-preserving Markdown blocks, and splits the result into
contiguous chunks of comparable length with whitespace-trimmed overlap from
each chunk's neighbors.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from html import unescape
from html.parser import HTMLParser
from pathlib import Path

from .errors import MalformedTable

BLOCK_JOINER = "\n\n"

HEADING_TAGS = {"h1", "h2", "h3", "h4", "h5", "h6"}
LIST_TAGS = {"ul", "ol"}
CODE_TAGS = {"pre", "code"}
# Containers we descend into rather than emit as blocks.
CONTAINER_TAGS = {"html", "body", "head", "div", "section", "article", "main", "blockquote"}
VOID_TAGS = {"br", "hr", "img", "meta", "link", "input"}


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    structured_markup: str
    clean_text: str | None = None
    origin_uri: str = ""

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.structured_markup:
            raise ValueError("structured_markup must be non-empty")


@dataclass(frozen=True)
class ParsedBlock:
    kind: str  # heading | paragraph | list | table | code
    markdown: str
    ordinal: int
    heading_level: int = 0


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    core_text: str
    prelude: str
    postlude: str
    block_range: tuple[int, int]
    char_len: int

    def presented_text(self) -> str:
        """Text shown to the LLM: core plus neighbor overlap."""
        return "\n".join(p for p in (self.prelude, self.core_text, self.postlude) if p)

    def to_json(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "core_text": self.core_text,
            "prelude": self.prelude,
            "postlude": self.postlude,
            "block_range": list(self.block_range),
            "char_len": self.char_len,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Chunk":
        return cls(
            chunk_id=obj["chunk_id"],
            doc_id=obj["doc_id"],
            core_text=obj["core_text"],
            prelude=obj["prelude"],
            postlude=obj["postlude"],
            block_range=(obj["block_range"][0], obj["block_range"][1]),
            char_len=obj["char_len"],
        )


@dataclass(frozen=True)
class ChunkingPolicy:
    target_chars: int = 1200
    max_chars: int = 2400
    overlap_budget: int = 200

    def __post_init__(self):
        if self.target_chars <= 0:
            raise ValueError("target_chars must be > 0")
        if self.max_chars < self.target_chars:
            raise ValueError("max_chars must be >= target_chars")
        if self.overlap_budget < 0:
            raise ValueError("overlap_budget must be >= 0")


# ---------------------------------------------------------------------------
# Table rendering
# ---------------------------------------------------------------------------

class _TableParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.rows: list[list[str]] = []
        self._row: list[str] | None = None
        self._cell: list[str] | None = None

    def handle_starttag(self, tag, attrs):
        if tag == "tr":
            self._row = []
        elif tag in ("td", "th"):
            self._cell = []

    def handle_endtag(self, tag):
        if tag in ("td", "th") and self._cell is not None:
            text = "".join(self._cell)
            if self._row is None:
                self._row = []
            self._row.append(text)
            self._cell = None
        elif tag == "tr" and self._row is not None:
            self.rows.append(self._row)
            self._row = None

    def handle_data(self, data):
        if self._cell is not None:
            self._cell.append(data)


def _clean_cell(text: str) -> str:
    text = text.replace("\n", " ").replace("\r", " ")
    text = re.sub(r"\s+", " ", text).strip()
    return text.replace("|", "\\|")


def table_to_markdown(table_markup: str) -> str:
    """Render a single table element as a Markdown pipe table.

    The first row becomes the header; short rows are padded to the widest
    row's column count; inner pipes are escaped and newlines collapsed.
    """
    parser = _TableParser()
    parser.feed(table_markup)
    parser.close()
    if parser._row is not None:  # unclosed trailing row
        parser.rows.append(parser._row)
    rows = [[_clean_cell(c) for c in row] for row in parser.rows]
    rows = [row for row in rows if row]
    if not rows:
        raise MalformedTable("table has no rows with cells")
    ncols = max(len(row) for row in rows)
    lines = []
    for i, row in enumerate(rows):
        padded = row + [""] * (ncols - len(row))
        lines.append("| " + " | ".join(padded) + " |")
        if i == 0:
            lines.append("| " + " | ".join(["---"] * ncols) + " |")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Structured markup -> draft blocks
# ---------------------------------------------------------------------------

@dataclass
class _Node:
    tag: str
    attrs: dict
    children: list = field(default_factory=list)  # _Node or str
    raw: list[str] = field(default_factory=list)  # raw markup, for tables


class _TreeBuilder(HTMLParser):
    """Builds a minimal DOM; keeps raw markup spans for table subtrees."""

    def __init__(self):
        super().__init__(convert_charrefs=False)
        self.root = _Node("#root", {})
        self._stack = [self.root]
        self._table_depth = 0

    def _raw_sink(self, text: str):
        for node in self._stack:
            if node.tag == "table":
                node.raw.append(text)
                break

    def handle_starttag(self, tag, attrs):
        if self._table_depth:
            self._raw_sink(self.get_starttag_text() or f"<{tag}>")
            if tag == "table":
                self._table_depth += 1
            return
        node = _Node(tag, dict(attrs))
        self._stack[-1].children.append(node)
        if tag == "table":
            self._table_depth = 1
            self._stack.append(node)
        elif tag not in VOID_TAGS:
            self._stack.append(node)

    def handle_startendtag(self, tag, attrs):
        if self._table_depth:
            self._raw_sink(self.get_starttag_text() or f"<{tag}/>")
            return
        self._stack[-1].children.append(_Node(tag, dict(attrs)))

    def handle_endtag(self, tag):
        if self._table_depth:
            if tag == "table":
                self._table_depth -= 1
                if self._table_depth == 0:
                    while self._stack and self._stack[-1].tag != "table":
                        self._stack.pop()
                    if self._stack:
                        self._stack.pop()
                    return
            self._raw_sink(f"</{tag}>")
            return
        for i in range(len(self._stack) - 1, 0, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                return

    def handle_data(self, data):
        if self._table_depth:
            self._raw_sink(data)
            return
        self._stack[-1].children.append(data)

    def handle_entityref(self, name):
        self.handle_data(f"&{name};")

    def handle_charref(self, name):
        self.handle_data(f"&#{name};")


def _node_text(node: _Node) -> str:
    parts = []
    for child in node.children:
        if isinstance(child, str):
            parts.append(unescape(child))
        else:
            parts.append(_node_text(child))
    return "".join(parts)


def _collapse(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


@dataclass
class _Draft:
    """Block before clean-text alignment and Markdown rendering."""
    kind: str
    text: str = ""  # heading/paragraph/code text
    items: list[str] = field(default_factory=list)  # list blocks
    table_md: str = ""  # table blocks, already rendered
    heading_level: int = 0
    ordered: bool = False


def _walk(node: _Node, drafts: list[_Draft]):
    pending_text: list[str] = []

    def flush():
        text = _collapse("".join(pending_text))
        pending_text.clear()
        if text:
            drafts.append(_Draft(kind="paragraph", text=text))

    for child in node.children:
        if isinstance(child, str):
            pending_text.append(unescape(child))
            continue
        tag = child.tag
        if tag in HEADING_TAGS:
            flush()
            text = _collapse(_node_text(child))
            if text:
                drafts.append(_Draft(kind="heading", text=text, heading_level=int(tag[1])))
        elif tag == "table":
            flush()
            markup = "<table>" + "".join(child.raw) + "</table>"
            try:
                md = table_to_markdown(markup)
                drafts.append(_Draft(kind="table", table_md=md))
            except MalformedTable:
                # Fall back to the table's plain text, if any.
                fallback = _collapse(re.sub(r"<[^>]+>", " ", unescape("".join(child.raw))))
                if fallback:
                    drafts.append(_Draft(kind="paragraph", text=fallback))
        elif tag in LIST_TAGS:
            flush()
            items = [
                _collapse(_node_text(li))
                for li in child.children
                if isinstance(li, _Node) and li.tag == "li"
            ]
            items = [it for it in items if it]
            if items:
                drafts.append(_Draft(kind="list", items=items, ordered=tag == "ol"))
        elif tag in CODE_TAGS:
            flush()
            text = _node_text(child).strip("\n")
            if text.strip():
                drafts.append(_Draft(kind="code", text=text))
        elif tag == "p":
            flush()
            text = _collapse(_node_text(child))
            if text:
                drafts.append(_Draft(kind="paragraph", text=text))
        elif tag in CONTAINER_TAGS:
            flush()
            _walk(child, drafts)
        elif tag in VOID_TAGS:
            pending_text.append(" ")
        else:
            # Unknown element: lossy but never dropping text.
            flush()
            text = _collapse(_node_text(child))
            if text:
                drafts.append(_Draft(kind="paragraph", text=text))
    flush()


def _parse_markup(markup: str) -> list[_Draft]:
    builder = _TreeBuilder()
    builder.feed(markup)
    builder.close()
    drafts: list[_Draft] = []
    _walk(builder.root, drafts)
    return drafts


def _render(draft: _Draft) -> str:
    if draft.kind == "heading":
        return "#" * draft.heading_level + " " + draft.text
    if draft.kind == "table":
        return draft.table_md
    if draft.kind == "list":
        if draft.ordered:
            return "\n".join(f"{i + 1}. {it}" for i, it in enumerate(draft.items))
        return "\n".join(f"- {it}" for it in draft.items)
    if draft.kind == "code":
        return "```\n" + draft.text + "\n```"
    return draft.text


# ---------------------------------------------------------------------------
# Clean-text alignment
# ---------------------------------------------------------------------------

ALIGN_THRESHOLD = 0.85
_ALNUM_RE = re.compile(r"[^\W_]+", re.UNICODE)


def _levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _norm_tokens(text: str) -> list[str]:
    return _ALNUM_RE.findall(text.lower())


def text_similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity over lowercase alphanumeric tokens."""
    sa = " ".join(_norm_tokens(a))
    sb = " ".join(_norm_tokens(b))
    if not sa and not sb:
        return 1.0
    longest = max(len(sa), len(sb))
    return 1.0 - _levenshtein(sa, sb) / longest


class _CleanTextMatcher:
    """Finds the clean-text segment best matching a structured-parser block."""

    def __init__(self, clean_text: str):
        self.text = clean_text
        self.spans = [m.span() for m in _ALNUM_RE.finditer(clean_text)]
        self.tokens = [clean_text[a:b].lower() for a, b in self.spans]

    def best_match(self, block_text: str) -> tuple[float, str]:
        n = len(_norm_tokens(block_text))
        if n == 0 or not self.tokens:
            return 0.0, ""
        best_sim, best_seg = -1.0, ""
        target = " ".join(_norm_tokens(block_text))
        sizes = {max(1, n - 2), max(1, n - 1), n, n + 1, n + 2}
        for size in sorted(sizes):
            if size > len(self.tokens):
                continue
            for start in range(len(self.tokens) - size + 1):
                window = " ".join(self.tokens[start:start + size])
                # Cheap length bound before the DP.
                if abs(len(window) - len(target)) > (1 - ALIGN_THRESHOLD) * max(len(window), len(target)) and best_sim >= ALIGN_THRESHOLD:
                    continue
                longest = max(len(target), len(window))
                sim = 1.0 - _levenshtein(target, window) / longest if longest else 1.0
                if sim > best_sim:
                    best_sim = sim
                    a = self.spans[start][0]
                    b = self.spans[start + size - 1][1]
                    # Widen to whitespace boundaries so adjacent punctuation
                    # (%, ., closing quotes) rides along with its token.
                    while a > 0 and not self.text[a - 1].isspace():
                        a -= 1
                    while b < len(self.text) and not self.text[b].isspace():
                        b += 1
                    best_seg = _collapse(self.text[a:b])
        return best_sim, best_seg


def align_outputs(source: SourceDocument) -> list[ParsedBlock]:
    """Merge the structured and clean-text parser outputs into Markdown blocks.

    Structure (kinds, heading levels, table layout) always comes from the
    structured markup. For headings, paragraphs, and list items, the text is
    swapped for the best-matching clean-text segment when similarity clears
    the threshold; tables and code keep the structured parser's text.
    """
    drafts = _parse_markup(source.structured_markup)
    matcher = _CleanTextMatcher(source.clean_text) if source.clean_text else None
    if matcher is not None:
        for draft in drafts:
            if draft.kind in ("heading", "paragraph"):
                sim, seg = matcher.best_match(draft.text)
                if sim >= ALIGN_THRESHOLD and seg:
                    draft.text = seg
            elif draft.kind == "list":
                new_items = []
                for item in draft.items:
                    sim, seg = matcher.best_match(item)
                    new_items.append(seg if sim >= ALIGN_THRESHOLD and seg else item)
                draft.items = new_items
    return [
        ParsedBlock(kind=d.kind, markdown=_render(d), ordinal=i, heading_level=d.heading_level)
        for i, d in enumerate(drafts)
    ]


# ---------------------------------------------------------------------------
# Chunking
# ---------------------------------------------------------------------------

def chunk_document(blocks: list[ParsedBlock], policy: ChunkingPolicy, doc_id: str) -> list[Chunk]:
    """Greedily pack whole blocks into chunks of roughly target_chars.

    A boundary is never placed between a heading and the block that follows
    it, and a single oversized block always becomes its own chunk.
    """
    if not blocks:
        return []
    groups: list[list[ParsedBlock]] = []
    cur: list[ParsedBlock] = []
    cur_len = 0

    for block in blocks:
        add = len(block.markdown) if not cur else cur_len + len(BLOCK_JOINER) + len(block.markdown)
        if cur and add > policy.target_chars:
            # Trailing headings stick with the block that follows them.
            carry: list[ParsedBlock] = []
            while cur and cur[-1].kind == "heading":
                carry.insert(0, cur.pop())
            if cur:
                groups.append(cur)
            # A headings-only remainder keeps accumulating past target.
            cur = carry
        cur.append(block)
        cur_len = len(BLOCK_JOINER.join(b.markdown for b in cur))
    if cur:
        groups.append(cur)

    chunks = []
    for i, group in enumerate(groups):
        core = BLOCK_JOINER.join(b.markdown for b in group)
        chunks.append(Chunk(
            chunk_id=f"{doc_id}-{i:04d}",
            doc_id=doc_id,
            core_text=core,
            prelude="",
            postlude="",
            block_range=(group[0].ordinal, group[-1].ordinal),
            char_len=len(core),
        ))
    return chunks


def _tail_cut(text: str, budget: int) -> str:
    """Last <= budget chars, with any leading partial token dropped."""
    if budget <= 0 or not text:
        return ""
    if len(text) <= budget:
        return text
    cut = text[-budget:]
    if not text[-budget - 1].isspace():
        # Cut landed mid-token; drop the fragment.
        m = re.search(r"\s", cut)
        if m is None:
            return ""
        cut = cut[m.end():]
    return cut.lstrip()


def _head_cut(text: str, budget: int) -> str:
    """First <= budget chars, with any trailing partial token dropped."""
    if budget <= 0 or not text:
        return ""
    if len(text) <= budget:
        return text
    cut = text[:budget]
    if not text[budget].isspace():
        m = re.search(r"\s\S*$", cut)
        if m is None:
            return ""
        cut = cut[:m.start()]
    return cut.rstrip()


def attach_overlap(chunks: list[Chunk], policy: ChunkingPolicy) -> list[Chunk]:
    """Give each chunk a whitespace-trimmed cut of its neighbors' cores."""
    out = []
    for i, chunk in enumerate(chunks):
        prelude = _tail_cut(chunks[i - 1].core_text, policy.overlap_budget) if i > 0 else ""
        postlude = _head_cut(chunks[i + 1].core_text, policy.overlap_budget) if i < len(chunks) - 1 else ""
        out.append(replace(chunk, prelude=prelude, postlude=postlude))
    return out


def convert_document(source: SourceDocument, policy: ChunkingPolicy) -> list[Chunk]:
    blocks = align_outputs(source)
    return attach_overlap(chunk_document(blocks, policy, source.doc_id), policy)


# ---------------------------------------------------------------------------
# Manifest-driven ingest
# ---------------------------------------------------------------------------

def load_source_manifest(path: str | Path) -> list[SourceDocument]:
    """Read a manifest mapping doc_id -> parser output file paths.

    Format: {"documents": {doc_id: {"structured_markup": path,
    "clean_text": optional path, "origin_uri": optional str}}}. Relative
    paths resolve against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    manifest = json.loads(path.read_text(encoding="utf-8"))
    docs = []
    for doc_id, entry in manifest["documents"].items():
        markup = (base / entry["structured_markup"]).read_text(encoding="utf-8")
        clean = None
        if entry.get("clean_text"):
            clean = (base / entry["clean_text"]).read_text(encoding="utf-8")
        docs.append(SourceDocument(
            doc_id=doc_id,
            structured_markup=markup,
            clean_text=clean,
            origin_uri=entry.get("origin_uri", ""),
        ))
    return docs


def write_chunks_jsonl(chunks: list[Chunk], path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(json.dumps(chunk.to_json(), ensure_ascii=False) + "\n")


def read_chunks_jsonl(path: str | Path) -> list[Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                chunks.append(Chunk.from_json(json.loads(line)))
    return chunks
