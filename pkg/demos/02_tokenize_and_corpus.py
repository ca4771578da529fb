"""Character tokenization, vocabulary files, and corpus preparation.

    python3 demos/02_tokenize_and_corpus.py
"""

import json
import tempfile
from pathlib import Path

from inkstone import corpus, vocab as V


def main():
    print("== tokenization is per character for CJK, per char lowercased for ASCII ==")
    text = "先帝創業未半ABC 123，而中道崩殂。"
    toks = V.tokenize(text)
    print(f"input : {text}")
    print(f"tokens: {list(toks)}")

    print()
    print("== vocabulary round trip ==")
    texts = ["先帝創業未半", "而中道崩殂", "今天下三分"]
    vb = V.build_vocab(texts)
    print(f"vocab size {len(vb)} (5 specials + characters); "
          f"pad={vb.pad_id} cls={vb.cls_id} sep={vb.sep_id} mask={vb.mask_id}")
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "vocab.txt"
        V.save_vocab(vb, path)
        head = path.read_text(encoding="utf-8").splitlines()[:7]
        print(f"first file lines: {head}")
        vb = V.load_vocab(path)

    ids, mask = V.encode(V.tokenize("先帝未半"), vb, max_len=8)
    print(f"encode('先帝未半', max_len=8): ids={ids.tolist()} mask={mask.tolist()}")
    print(f"decode back: {V.decode(ids, vb)!r}  (specials and padding dropped)")
    print(f"unknown char maps to [UNK]: id_of('龘') == unk_id is "
          f"{vb.id_of('龘') == vb.unk_id}")

    print()
    print("== cleaning and document parsing ==")
    raw = "  《出師表》　\n先帝創業未半，而中道崩殂¤。\r\n\n\n今天下三分    "
    cleaned = corpus.clean_text(raw, blacklist="¤")  # blacklist is per character
    print(f"cleaned: {cleaned!r}")

    block = "出師表\n先帝創業未半，而中道崩殂。\n今天下三分，益州疲弊。"
    doc = corpus.parse_document(block, kind="article")
    print(f"title={doc.title!r}  body starts {doc.body[:10]!r}")

    print()
    print("== couplet pairs: first half is the prompt, second half the target ==")
    ex = corpus.make_cpg_pairs(["白日依山盡", "黃河入海流", "欲窮千里目", "更上一層樓"],
                               mode="2-2")
    print(f"source: {ex.source_text}")
    print(f"target: {ex.target_text}")

    print()
    print("== corpus statistics ==")
    docs = [corpus.parse_document(b) for b in
            ["甲\n一二三四五", "乙\n六七八九", "丙\n十百千"]]
    stats = corpus.corpus_stats(docs)
    print(json.dumps(json.loads(stats.to_json()), ensure_ascii=False, indent=2))

    print()
    print("== deterministic splits ==")
    train, dev, test = corpus.split_dataset(list(range(10)),
                                            corpus.SplitSpec(0.8, 0.1, 0.1, seed=1))
    print(f"train={train} dev={dev} test={test}")


if __name__ == "__main__":
    main()
