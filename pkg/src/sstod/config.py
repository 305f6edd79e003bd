"""Domain config files.

A small INI-like format: ``[section]`` headers, ``key = value`` lines (keys
may repeat), ``#`` comments.  Every parse or validation error carries the
offending line number.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import DOMAINS, DomainSpec

DATA_DIR = Path(__file__).parent / "data"
ENV_VAR = "SSTOD_CONFIG"


class ConfigError(ValueError):
    def __init__(self, msg, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.line = line


@dataclass(frozen=True)
class NoiseConfig:
    substitution_prob: float = 0.0
    confusion_sets: tuple[tuple[str, ...], ...] = ()
    knowledge_corruption_prob: float = 0.0
    homophone_values: bool = False  # name domain: value characters are heard as homophones too
    sticky_homophones: bool = False  # a misheard character stays misheard for the whole dialog

    def __post_init__(self):
        for name in ("substitution_prob", "knowledge_corruption_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def silent(self) -> bool:
        return self.substitution_prob == 0.0 and self.knowledge_corruption_prob == 0.0

    def with_overrides(self, **kw) -> "NoiseConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        for k, v in kw.items():
            if k not in d:
                raise ValueError(f"unknown noise field {k!r}")
            d[k] = v
        return NoiseConfig(**d)


ZERO_NOISE = NoiseConfig()


@dataclass(frozen=True)
class AgentConfig:
    confirm_strategy: str = "both"  # implicit_every_turn | explicit_at_end | both
    knowledge_enabled: bool = True
    knowledge_threshold: float = 0.3
    clarify_on_ambiguity: bool = True
    compare_groups: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        if self.confirm_strategy not in ("implicit_every_turn", "explicit_at_end", "both"):
            raise ValueError(f"unknown confirm strategy {self.confirm_strategy!r}")
        if not 0.0 <= self.knowledge_threshold <= 1.0:
            raise ValueError("knowledge_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class UserConfig:
    slip_prob: float = 0.0  # chance an inform drops or doubles one symbol
    knowledge_free_prob: float = 0.0  # name domain: inform without knowledge
    surnames: str = ""
    given: str = ""


@dataclass(frozen=True)
class RenderConfig:
    quantifier_prob: float = 0.0
    alias_prob: float = 0.0
    aliases: tuple[tuple[str, str], ...] = ()  # (symbol, spoken alias)
    readback_groups: tuple[int, ...] = ()
    unit: str = "位"
    slot_name: str = "号码"


# ------------------------------------------------------------------- parser


@dataclass
class Section:
    name: str
    line: int
    entries: list[tuple[str, str, int]] = field(default_factory=list)

    def get(self, key, default=None):
        for k, v, _ in self.entries:
            if k == key:
                return v
        return default

    def line_of(self, key):
        for k, _, ln in self.entries:
            if k == key:
                return ln
        return self.line

    def all(self, key):
        return [(v, ln) for k, v, ln in self.entries if k == key]


def parse_config_text(text: str, path="<string>") -> dict[str, Section]:
    sections: dict[str, Section] = {}
    cur = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if not raw.lstrip().startswith("#") else ""
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", path, lineno)
            name = line[1:-1].strip()
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", path, lineno)
            cur = sections[name] = Section(name, lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        if cur is None:
            raise ConfigError("entry outside of any section", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", path, lineno)
        cur.entries.append((key, value, lineno))
    return sections


def _float(sec: Section, key, default, path):
    raw = sec.get(key) if sec else None
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {raw!r}", path, sec.line_of(key)) from None


def _int(sec, key, default, path):
    raw = sec.get(key) if sec else None
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {raw!r}", path, sec.line_of(key)) from None


def _bool(sec, key, default, path):
    raw = sec.get(key) if sec else None
    if raw is None:
        return default
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {raw!r}", path, sec.line_of(key))


def _dist(raw: str, path, line) -> dict[int, float]:
    out = {}
    for tok in raw.split():
        try:
            k, p = tok.split(":")
            out[int(k)] = float(p)
        except ValueError:
            raise ConfigError(f"bad distribution entry {tok!r}", path, line) from None
    return out


def _require(sections, name, path):
    if name not in sections:
        raise ConfigError(f"missing section [{name}]", path)
    return sections[name]


def _symbols(raw: str, path, line, pinyin_path: Path) -> str:
    """Expand a symbol list.  ``@pinyin`` pulls every character of the pinyin table."""
    out = []
    for tok in raw.split():
        if tok == "@pinyin":
            from .knowledge import cached_pinyin

            out.extend(cached_pinyin(str(pinyin_path)).keys())
        elif tok.startswith("@"):
            raise ConfigError(f"unknown symbol macro {tok!r}", path, line)
        else:
            out.extend(tok)
    return "".join(dict.fromkeys(out))


def load_domain(domain: Optional[str] = None, path=None) -> DomainSpec:
    """Load a domain config.  ``path`` wins over ``$SSTOD_CONFIG`` which wins over the bundled file.

    Either location may also name a directory holding ``{domain}.cfg`` files.
    """
    if path is None:
        env = os.environ.get(ENV_VAR)
        if env:
            path = env
    if path is None:
        if domain not in DOMAINS:
            raise ConfigError(f"unknown domain {domain!r}; choose from {', '.join(DOMAINS)}")
        path = DATA_DIR / f"{domain}.cfg"
    path = Path(path)
    if path.is_dir():
        if domain not in DOMAINS:
            raise ConfigError(f"unknown domain {domain!r}; choose from {', '.join(DOMAINS)}", path)
        path = path / f"{domain}.cfg"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path) from None
    spec = load_domain_text(text, path)
    if domain is not None and spec.domain_id != domain:
        raise ConfigError(f"config is for domain {spec.domain_id!r}, not {domain!r}", path)
    return spec


def load_domain_text(text: str, path=Path("<string>")) -> DomainSpec:
    path = Path(path)
    base = path.parent if path.parent != Path("") else DATA_DIR
    secs = parse_config_text(text, path)

    dom = _require(secs, "domain", path)
    domain_id = dom.get("id")
    if domain_id not in DOMAINS:
        raise ConfigError(f"unknown domain id {domain_id!r}", path, dom.line_of("id"))
    max_turns = _int(dom, "max_turns", 40, path)

    res = secs.get("resources")

    def local(raw) -> Path:
        # relative paths resolve next to the config, then in the bundled data
        p = Path(raw)
        if p.is_absolute() or (base / p).exists() or not (DATA_DIR / p).exists():
            return p if p.is_absolute() else base / p
        return DATA_DIR / p

    def resource(key, default):
        raw = res.get(key) if res else None
        return default if raw is None else local(raw)

    kb_path = resource("kb", DATA_DIR / "kb.tsv")
    pinyin_path = resource("pinyin", DATA_DIR / "pinyin.tsv")

    alpha_sec = _require(secs, "alphabet", path)
    if alpha_sec.get("symbols") is None:
        raise ConfigError("[alphabet] needs 'symbols'", path, alpha_sec.line)
    alphabet = _symbols(alpha_sec.get("symbols"), path, alpha_sec.line_of("symbols"), pinyin_path)
    if not alphabet:
        raise ConfigError("empty alphabet", path, alpha_sec.line_of("symbols"))
    pools = {}
    for key, raw, ln in alpha_sec.entries:
        if key == "symbols":
            continue
        pool = _symbols(raw, path, ln, pinyin_path)
        stray = [c for c in pool if c not in alphabet]
        if stray:
            raise ConfigError(f"pool {key!r} has symbols outside the alphabet: {''.join(stray)}", path, ln)
        pools[key] = pool

    lens = _require(secs, "lengths", path)
    lmin = _int(lens, "min", None, path)
    lmax = _int(lens, "max", None, path)
    if lmin is None or lmax is None:
        raise ConfigError("[lengths] needs min and max", path, lens.line)
    if lmin < 1 or lmin > lmax:
        raise ConfigError(f"invalid length range {lmin}..{lmax}", path, lens.line_of("min"))
    length_weights = None
    if lens.get("dist"):
        length_weights = _dist(lens.get("dist"), path, lens.line_of("dist"))
        if any(not lmin <= k <= lmax for k in length_weights):
            raise ConfigError("length distribution outside [min, max]", path, lens.line_of("dist"))

    seg_sec = _require(secs, "segmentation", path)
    segmentation = {}
    for key, raw, ln in seg_sec.entries:
        try:
            segmentation[int(key)] = float(raw)
        except ValueError:
            raise ConfigError(f"bad segmentation entry {key} = {raw}", path, ln) from None
    if not segmentation or any(k < 1 for k in segmentation):
        raise ConfigError("segmentation needs positive segment counts", path, seg_sec.line)
    if abs(sum(segmentation.values()) - 1.0) > 1e-9:
        raise ConfigError(f"segmentation sums to {sum(segmentation.values())}", path, seg_sec.line)

    act_sec = _require(secs, "actions", path)
    system = tuple(act_sec.get("system", "").split())
    user = tuple(act_sec.get("user", "").split())
    if not system or not user:
        raise ConfigError("[actions] needs system and user lists", path, act_sec.line)
    inventory = system + user

    tr_sec = _require(secs, "transitions", path)
    table = {}
    for key, raw, ln in tr_sec.entries:
        if key not in system:
            raise ConfigError(f"transition row for unknown system act {key!r}", path, ln)
        row = {}
        for tok in raw.split():
            try:
                label, p = tok.split(":")
                row[label] = float(p)
            except ValueError:
                raise ConfigError(f"bad transition entry {tok!r}", path, ln) from None
            if label not in user:
                raise ConfigError(f"unknown user act {label!r}", path, ln)
            if row[label] < 0:
                raise ConfigError(f"negative probability for {label}", path, ln)
        total = sum(row.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"transition row {key} sums to {total:.12g}, not 1", path, ln)
        table[key] = row

    nz = secs.get("noise")
    confusion = []
    if nz:
        for raw, ln in nz.all("confusion"):
            group = tuple(raw.split())
            if len(group) < 2:
                raise ConfigError("confusion set needs at least two symbols", path, ln)
            confusion.append(group)
    try:
        noise = NoiseConfig(
            substitution_prob=_float(nz, "substitution_prob", 0.0, path),
            confusion_sets=tuple(confusion),
            knowledge_corruption_prob=_float(nz, "knowledge_corruption_prob", 0.0, path),
            homophone_values=_bool(nz, "homophone_values", False, path),
            sticky_homophones=_bool(nz, "sticky_homophones", False, path),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e), path, nz.line if nz else None) from None

    ag = secs.get("agent")
    compare = tuple(tuple(raw.split()) for raw, _ in (ag.all("compare") if ag else []))
    try:
        agent = AgentConfig(
            confirm_strategy=(ag.get("confirm_strategy", "both") if ag else "both"),
            knowledge_enabled=_bool(ag, "knowledge_enabled", True, path),
            knowledge_threshold=_float(ag, "knowledge_threshold", 0.3, path),
            clarify_on_ambiguity=_bool(ag, "clarify_on_ambiguity", True, path),
            compare_groups=compare,
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e), path, ag.line if ag else None) from None

    us = secs.get("user")
    user_cfg = UserConfig(
        slip_prob=_float(us, "slip_prob", 0.0, path),
        knowledge_free_prob=_float(us, "knowledge_free_prob", 0.0, path),
        surnames=pools.get("surnames", ""),
        given=pools.get("given", ""),
    )

    rd = secs.get("render")
    aliases = []
    if rd:
        for raw, ln in rd.all("alias"):
            parts = raw.split()
            if len(parts) != 2:
                raise ConfigError("alias needs 'symbol spoken'", path, ln)
            aliases.append((parts[0], parts[1]))
    groups = tuple(int(x) for x in (rd.get("readback_groups", "") if rd else "").split())
    render = RenderConfig(
        quantifier_prob=_float(rd, "quantifier_prob", 0.0, path),
        alias_prob=_float(rd, "alias_prob", 0.0, path),
        aliases=tuple(aliases),
        readback_groups=groups,
        unit=(rd.get("unit", "位") if rd else "位"),
        slot_name=(rd.get("slot_name", "号码") if rd else "号码"),
    )

    tp = _require(secs, "templates", path)
    files = [(local(raw), ln) for raw, ln in tp.all("file")]
    if not files:
        raise ConfigError("[templates] lists no files", path, tp.line)

    try:
        spec = DomainSpec(
            domain_id=domain_id,
            alphabet=frozenset(alphabet),
            length_min=lmin,
            length_max=lmax,
            segmentation=segmentation,
            action_inventory=inventory,
            transition_table=table,
            max_turns=max_turns,
            length_weights=length_weights,
            sampling_pools=pools,
            noise=noise,
            agent=agent,
            user=user_cfg,
            patterns=None,
            resources={"kb": str(kb_path), "pinyin": str(pinyin_path), "render": render,
                       "system_acts": system, "user_acts": user},
            source=str(path),
        )
    except ValueError as e:
        raise ConfigError(str(e), path) from None

    from .language import load_patterns

    patterns = load_patterns(files, spec, render)
    object.__setattr__(spec, "patterns", patterns)
    return spec
