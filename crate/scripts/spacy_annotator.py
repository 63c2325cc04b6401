#!/usr/bin/env python3
"""JSON-lines annotation server for `hgat --set backend=external`.

Usage: spacy_annotator.py [model_name]   (default en_core_web_sm)
"""
import json
import sys

import spacy


def main():
    model = sys.argv[1] if len(sys.argv) > 1 else "en_core_web_sm"
    nlp = spacy.load(model, disable=["parser", "lemmatizer"])
    version = f"{spacy.__version__}/{model}-{nlp.meta.get('version', '?')}"
    print(json.dumps({"name": "spacy", "version": version}), flush=True)
    for line in sys.stdin:
        try:
            text = json.loads(line)["text"]
            doc = nlp(text)
            tokens = [
                {"text": t.text, "pos": t.pos_, "ent": t.ent_type_}
                for t in doc
                if not t.is_space
            ]
            print(json.dumps({"tokens": tokens}), flush=True)
        except Exception as exc:  # report and keep serving
            print(json.dumps({"error": str(exc)}), flush=True)


if __name__ == "__main__":
    main()
