"""Regenerate src/sstod/data/pinyin.tsv.

The table covers the GB2312 level-1 characters (the 3,755 most common
hanzi) plus every character that appears in the bundled knowledge base.
Readings are tone-stripped, default (most frequent) reading only.

Needs ``pypinyin`` at authoring time only; the package reads the TSV.
"""
from pathlib import Path

from pypinyin import Style, pinyin

DATA = Path(__file__).resolve().parents[1] / "src" / "sstod" / "data"


def gb2312_level1():
    chars = []
    for hi in range(0xB0, 0xD8):
        for lo in range(0xA1, 0xFF):
            try:
                ch = bytes([hi, lo]).decode("gb2312")
            except UnicodeDecodeError:
                continue
            chars.append(ch)
    return chars


def kb_chars():
    out = []
    for line in (DATA / "kb.tsv").read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        char, _, text, _ = line.split("\t")
        out.extend(char + text)
    return out


def main():
    seen = {}
    for ch in gb2312_level1() + kb_chars():
        if ch in seen or not ("一" <= ch <= "鿿"):
            continue
        seen[ch] = pinyin(ch, style=Style.NORMAL, heteronym=False)[0][0]
    lines = ["# character\tpinyin (tone-stripped, default reading)"]
    lines += [f"{ch}\t{py}" for ch, py in seen.items()]
    (DATA / "pinyin.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(seen)} entries")


if __name__ == "__main__":
    main()
