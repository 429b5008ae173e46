#!/usr/bin/env python3
"""Regenerates the checked-in fixture trees under fixtures/.

Run from the repository root: python3 tools/gen_fixtures.py
The output is deterministic; tests read the files, not this script.
"""

import csv
import json
import os
import shutil
import sys

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")

PARAPHRASE_ECHO = {
    "tag": "icsv/paraphrase",
    "echo_between": ["[Target sentence s_A that contains the in-text citation to paper B]\n", "\n\nInstructions:"],
    "strip_markers": True,
}


def write(path, body):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(body)


def write_json(path, obj):
    write(path, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def paper(title, sections, references):
    """Markdown paper: sections is [(heading, [paragraph, ...])], references is [raw entry, ...]."""
    out = ["# " + title, ""]
    for heading, paragraphs in sections:
        out += ["## " + heading, ""]
        for p in paragraphs:
            out += [p, ""]
    out += ["## References", ""]
    for i, r in enumerate(references, 1):
        out.append("[%d] %s" % (i, r))
    return "\n".join(out) + "\n"


# ---- end-to-end corpus ---------------------------------------------------------------

TARGETS = {
    "t1": dict(title="Dense passage retrieval for open domain questions", authors=["Karpov, V.", "Oguz, B."],
               year=2020, venue="Journal of Retrieval Studies", doi="10.5555/t1", venue_type="Journal"),
    "t2": dict(title="Sparse lexical matching revisited", authors=["Lin, J.", "Ma, X."], year=2021,
               venue="Information Access Letters", doi="10.5555/t2", venue_type="Journal"),
    "t3": dict(title="Hierarchical graph parsing for long sentences", authors=["Lee, K.", "Park, S."], year=2019,
               venue="Computational Syntax", doi="10.5555/t3", venue_type="Journal"),
    "t4": dict(title="Sequential tagging with external memory", authors=["Novak, P.", "Orr, D."], year=2018,
               venue="Proceedings of the Tagging Conference", doi="10.5555/t4", venue_type="Conference"),
    "t5": dict(title="Gradient clipping stabilises recurrent training", authors=["Quinn, R."], year=2017,
               venue="Neural Methods", doi="10.5555/t5", venue_type="Journal"),
    "t6": dict(title="Curriculum schedules for reading comprehension", authors=["Sato, H.", "Ueda, M."], year=2022,
               venue="Journal of Learning Systems", doi="10.5555/t6", venue_type="Journal"),
}

TARGET_TEXT = {
    "t1": [("Method", ["We train a dual encoder over question and passage pairs. Negatives come from the same batch."]),
           ("Results", ["Our dual encoder retrieves passages with 78 percent top-20 accuracy. "
                        "This exceeds the lexical baseline by a wide margin. "
                        "Training takes two days on eight accelerators."]),
           ("Limitations", ["The index is large and must be rebuilt when the corpus changes."])],
    "t2": [("Setup", ["We compare a tuned lexical ranker against a neural baseline on five retrieval datasets."]),
           ("Results", ["BM25 outperforms the neural baseline on all five datasets. "
                        "The gap is largest on the biomedical collection. "
                        "Query latency is also lower for the lexical ranker."]),
           ("Discussion", ["Tuning the length normalisation parameter explains most of the gain."])],
    "t5": [("Method", ["We rescale gradients whose norm exceeds a fixed threshold."]),
           ("Results", ["Clipping removes loss spikes during recurrent training. "
                        "Final perplexity is unchanged by the threshold choice."])],
    "t6": [("Method", ["Training examples are ordered from short to long passages over the first epochs."]),
           ("Results", ["The schedule changes convergence speed on two reading benchmarks. "
                        "Effects on final accuracy vary across random seeds."])],
}

# Paywalled targets: one aspect claim per witness.
WITNESS_CLAIMS = {
    "t3": [
        "The hierarchical graph parser improves parsing accuracy on long sentences",
        "A hierarchical graph parser builds phrase nodes before attaching words",
        "Graph parsing with a hierarchy was evaluated on three treebanks",
        "The hierarchical parser runs in quadratic time in sentence length",
        "Hierarchical graph parsing reduces attachment errors for distant heads",
        "Phrase level graph parsing was released with an open implementation",
    ],
    "t4": [
        "Sequential tagging with external memory was evaluated only on English newswire",
        "The memory tagger stores previous label decisions in a key value table",
        "External memory tagging improves entity recall on the newswire test set",
        "The memory augmented tagger is slower than a plain recurrent tagger",
        "Memory based tagging was not tested on languages other than English",
        "A tagger with external memory uses a fixed table of two thousand slots",
    ],
}

WITNESS_VENUES = [
    dict(venue_type="Journal", impact_factor=3.1, citation_count=120),
    dict(venue_type="Conference", conference_metric=0.8, citation_count=45),
    dict(venue_type="Preprint", repository_rate=0.4, citation_count=8),
    dict(venue_type="Journal", impact_factor=1.2, citation_count=30),
    dict(venue_type="Conference", conference_metric=0.5, citation_count=15),
    dict(venue_type="Journal", impact_factor=5.0, citation_count=300),
]


def ref_string(t):
    names = []
    for a in t["authors"]:
        family, initials = [x.strip() for x in a.split(",")]
        names.append("%s %s" % (initials, family))
    return "%s. %s. %s, %d. doi:%s" % (", ".join(names), t["title"], t["venue"], t["year"], t["doi"])


def gen_corpus():
    base = os.path.join(ROOT, "corpus")
    shutil.rmtree(base, ignore_errors=True)
    records = []
    for key, t in TARGETS.items():
        rec = dict(id=key, title=t["title"], authors=t["authors"], year=t["year"], venue=t["venue"], doi=t["doi"],
                   venue_type=t["venue_type"], field="cs.CL", citation_count=50, impact_factor=2.0,
                   conference_metric=0.6, abstract="Abstract of " + t["title"] + ".")
        if key in TARGET_TEXT:
            rec["open_access"] = True
            rec["full_text"] = "fulltext/%s.md" % key
            write(os.path.join(base, "metadata", rec["full_text"]), paper(t["title"], TARGET_TEXT[key], []))
        else:
            rec["open_access"] = False
        if key == "t5":
            rec["retracted"] = True
        records.append(rec)

    for key, claims in WITNESS_CLAIMS.items():
        t = TARGETS[key]
        for i, claim in enumerate(claims):
            wid = "%s_w%d" % (key, i + 1)
            title = "Witness study %d on %s" % (i + 1, t["title"].lower())
            body = paper(title, [
                ("Background", ["We build on earlier parsers and taggers. "
                                "%s [1]. Our own system extends this line of work." % claim]),
                ("Experiments", ["We evaluate on standard benchmarks with fixed seeds [2]."])],
                [ref_string(t), "Z. Zed. Benchmarks for everything. Data Journal, 2015."])
            rec = dict(id=wid, title=title, authors=["Witt, A%d." % (i + 1)], year=2023, venue="Witness Venue %d" % i,
                       doi="10.7777/%s" % wid, field="cs.CL", open_access=True, full_text="fulltext/%s.md" % wid,
                       cites=[key])
            rec.update(WITNESS_VENUES[i])
            write(os.path.join(base, "metadata", rec["full_text"]), body)
            records.append(rec)
    # A closed-access citer is enumerated and rejected.
    records.append(dict(id="t3_closed", title="A closed survey of parsers", authors=["Gate, K."], year=2022,
                        venue="Paywall Review", doi="10.7777/t3_closed", open_access=False, cites=["t3"],
                        venue_type="Journal", citation_count=5))
    write_json(os.path.join(base, "metadata", "records.json"), {"records": records})

    refs1 = [ref_string(TARGETS["t1"]), ref_string(TARGETS["t2"]),
             "Q. Phantom. Imaginary results on nonexistent data. Journal of Unreal Findings, 2021.",
             ref_string(TARGETS["t6"])]
    write(os.path.join(base, "papers", "p1.md"), paper("Retrieval for question answering", [
        ("Introduction", ["Open domain question answering needs a retriever. "
                          "A dual encoder retrieves passages with 78 percent top-20 accuracy [1]. "
                          "In contrast, the neural baseline outperforms BM25 on all five datasets [2]."]),
        ("Related work", ["Earlier studies reported strong gains from synthetic questions [3]. "
                          "Curriculum schedules improve final accuracy on every reading benchmark [4]."])],
        refs1))

    refs2 = [ref_string(TARGETS["t3"]), ref_string(TARGETS["t4"])]
    write(os.path.join(base, "papers", "p2.md"), paper("Structured prediction for long inputs", [
        ("Introduction", ["Long sentences remain hard for syntactic parsers. "
                          "The hierarchical graph parser improves parsing accuracy on long sentences [1]. "
                          "We adopt it as our baseline."]),
        ("Tagging", ["Memory helps sequence labelling. "
                     "External memory tagging was shown to work across twelve languages [2]. "
                     "We test this on our data."])],
        refs2))

    refs3 = [ref_string(TARGETS["t5"]), ref_string(TARGETS["t1"])]
    write(os.path.join(base, "papers", "p3.md"), paper("Stable training of retrievers", [
        ("Introduction", ["Training instability is common. "
                          "Gradient clipping is known to lower final perplexity by a large factor [1]. "
                          "A dense retriever reaches 78 percent top-20 accuracy [2]."]),
        ("Method", ["We follow prior setups closely [7]."])],
        refs3))

    stub = {
        "completions": [
            dict(PARAPHRASE_ECHO),
            {"tag": "icsv/cluster", "contains": "Hierarchical graph parsing for long sentences",
             "replies": json.dumps({"clusters": [
                 {"cluster_id": "C%d" % (i + 1), "cluster_name": "aspect %d" % (i + 1),
                  "aspect_summary": "Aspect %d of the parser." % (i + 1), "claim_ids": [i + 1]} for i in range(6)]})},
            {"tag": "icsv/cluster", "contains": "Sequential tagging with external memory",
             "replies": json.dumps({"clusters": [
                 {"cluster_id": "C%d" % (i + 1), "cluster_name": "aspect %d" % (i + 1),
                  "aspect_summary": "Aspect %d of the tagger." % (i + 1), "claim_ids": [i + 1]} for i in range(6)]})},
            {"tag": "icsv/relation", "contains": "hierarchical graph parser improves parsing accuracy",
             "replies": json.dumps({"label": "ENTAILS", "justification": "The witness attributes the same finding."})},
            {"tag": "icsv/relation", "contains": "twelve languages",
             "replies": json.dumps({"label": "CONTRADICTS",
                                     "justification": "Witnesses restrict the evaluation to English."})},
            {"tag": "acsv/lrm", "contains": "Curriculum schedules improve final accuracy",
             "replies": ["The passages report effects on convergence speed only and say final accuracy varies.\n"
                         "Verdict: Miscitation"]},
            {"tag": "acsv/lrm", "replies": ["The passages neither confirm nor refute the statement.\nVerdict: Undecidable"]},
            {"tag": "taxonomy", "contains": "twelve languages",
             "replies": ["Code: SE\nRationale: The source was evaluated on English only."]},
            {"tag": "taxonomy", "contains": "Curriculum schedules improve",
             "replies": ["Code: EC\nRationale: A mixed result is presented as a uniform gain."]},
            {"tag": "taxonomy", "replies": ["Code: CM\nRationale: The claim reverses the reported comparison."]},
        ],
        "nli": [
            {"premise_contains": "78 percent top-20 accuracy", "hypothesis_contains": "78 percent top-20 accuracy",
             "entail": 0.96, "contradict": 0.01},
            {"premise_contains": "BM25 outperforms the neural baseline",
             "hypothesis_contains": "neural baseline outperforms BM25", "entail": 0.02, "contradict": 0.95},
            {"premise_contains": "Final perplexity is unchanged", "hypothesis_contains": "lower final perplexity",
             "entail": 0.01, "contradict": 0.94},
        ],
    }
    write_json(os.path.join(base, "stub", "corpus.json"), stub)

    stats = ["table,field_id,year,values",
             "citations,cs.CL,2023," + " ".join(str(v) for v in [1, 3, 5, 8, 10, 15, 20, 30, 45, 60, 90, 120, 200, 300, 500]),
             "impact_factor,cs.CL,," + " ".join(str(v) for v in [0.5, 1.0, 1.2, 1.8, 2.5, 3.1, 4.0, 5.0, 7.5]),
             "conference_metric,cs.CL,," + " ".join(str(v) for v in [0.2, 0.3, 0.5, 0.6, 0.8, 0.9]),
             "repository_rate,cs.CL,," + " ".join(str(v) for v in [0.1, 0.2, 0.4, 0.6, 0.9])]
    write(os.path.join(base, "reference_stats.csv"), "\n".join(stats) + "\n")

    write_json(os.path.join(base, "config.json"), {
        "backend": "stub",
        "backends": {"stub": {"type": "stub", "fixtures": "stub"}},
        "max_parallel": 4,
        "cache": {"enabled": False},
        "metadata": {"type": "fixture", "dir": "metadata"},
        "reference_stats": "reference_stats.csv",
        "style": "numeric",
    })

    # Expected routing and outcome per (citing paper, target key).
    write_json(os.path.join(base, "expected.json"), {
        "p1": {"ref1": ["Supported", None, "Accessible"], "ref2": ["Miscitation", "CM", "Accessible"],
               "ref3": ["Miscitation", "AT", "Ghost"], "ref4": ["Miscitation", "EC", "Accessible"]},
        "p2": {"ref1": ["Supported", None, "Inaccessible"], "ref2": ["Miscitation", "SE", "Inaccessible"]},
        "p3": {"ref1": ["Miscitation", "CV", "Accessible"], "ref2": ["Supported", None, "Accessible"],
               "7": ["Miscitation", "AT", "Ghost"]},
    })



# ---- parsing corpus ------------------------------------------------------------------

AUTHORS = [("Smith", "A."), ("Jones", "B."), ("Garcia", "C."), ("Chen", "D."), ("Kowalski", "E."), ("Okafor", "F."),
           ("Haddad", "G."), ("Larsen", "H."), ("Moreau", "I."), ("Tanaka", "J."), ("Silva", "K."), ("Ivanova", "L.")]
TOPICS = ["graph neural networks for molecules", "contrastive pretraining of speech encoders",
          "sparse attention for long documents", "causal discovery from time series",
          "federated optimisation with client drift", "uncertainty estimation in segmentation",
          "program synthesis from examples", "active learning for entity linking",
          "robust reward models for dialogue", "neural fields for scene reconstruction",
          "low resource machine translation", "tabular anomaly detection"]


def numeric_entries(doc, n):
    out = []
    for i in range(n):
        fam, ini = AUTHORS[(doc + i) % len(AUTHORS)]
        fam2, ini2 = AUTHORS[(doc + i + 5) % len(AUTHORS)]
        topic = TOPICS[(doc * 3 + i) % len(TOPICS)]
        out.append("%s %s, %s %s. Study %d of %s. Journal of Examples, %d." % (ini, fam, ini2, fam2, i + 1, topic,
                                                                           2000 + (doc + i) % 20))
    return out


def numeric_doc(d):
    """Numeric markdown article. Returns (markdown, truth edges)."""
    n = 8
    refs = numeric_entries(d, n)
    truth = []
    sentences = []

    def cite(snippet, marker, targets, unresolved=()):
        sentences.append("%s %s." % (snippet, marker))
        truth.append({"snippet": snippet, "targets": ["ref%d" % t for t in targets],
                      "unresolved": list(unresolved)})

    cite("Single citations anchor claim %d-a" % d, "[1]", [1])
    cite("Grouped citations support claim %d-b" % d, "[2, 3]", [2, 3])
    dash = ["\u2013", "-", "--"][d % 3]
    cite("A range covers claim %d-c" % d, "[3%s5]" % dash, [3, 4, 5])
    cite("Mixed groups and ranges cover claim %d-d" % d, "[1, 6%s8]" % dash, [1, 6, 7, 8])
    if d % 2 == 0:
        cite("An out of range marker flags claim %d-e" % d, "[%d]" % (n + 3), [], [str(n + 3)])
    sentences.insert(2, "This sentence carries no citation at all.")
    body = paper("Numeric study %d" % d, [("Introduction", [" ".join(sentences[:3])]),
                                           ("Discussion", [" ".join(sentences[3:])])], refs)
    return body, truth


def author_year_doc(d):
    refs = []
    people = [AUTHORS[(d + i) % len(AUTHORS)] for i in range(6)]
    years = [2010 + (d + i) % 12 for i in range(6)]
    for i in range(6):
        fam, ini = people[i]
        if i == 1:
            fam2, ini2 = AUTHORS[(d + 7) % len(AUTHORS)]
            names = "%s, %s and %s, %s" % (fam, ini, fam2, ini2)
        elif i == 2:
            names = "%s, %s, %s, %s and %s, %s" % (fam, ini, AUTHORS[(d + 8) % 12][0], AUTHORS[(d + 8) % 12][1],
                                                    AUTHORS[(d + 9) % 12][0], AUTHORS[(d + 9) % 12][1])
        else:
            names = "%s, %s" % (fam, ini)
        refs.append("%s (%d). Work %d on %s. Transactions on Examples." % (names, years[i], i + 1,
                                                                          TOPICS[(d + i) % len(TOPICS)]))
    truth = []
    sentences = []

    def add(sentence, snippet, targets, unresolved=()):
        sentences.append(sentence)
        truth.append({"snippet": snippet, "targets": ["ref%d" % t for t in targets], "unresolved": list(unresolved)})

    f = [p[0] for p in people]
    f2 = AUTHORS[(d + 7) % len(AUTHORS)][0]
    add("Parenthetical citation supports claim %d-a (%s, %d)." % (d, f[0], years[0]), "claim %d-a" % d, [1])
    add("%s and %s (%d) report claim %d-b." % (f[1], f2, years[1], d), "claim %d-b" % d, [2])
    add("Several authors agree on claim %d-c (%s et al., %d; %s, %d)." % (d, f[2], years[2], f[3], years[3]),
        "claim %d-c" % d, [3, 4])
    add("%s (%d) extends claim %d-d." % (f[4], years[4], d), "claim %d-d" % d, [5])
    sentences.append("Plain sentences stay unattributed here.")
    add("A citation to work absent from the list marks claim %d-e (Nobody, 1999)." % d, "claim %d-e" % d, [],
        ["Nobody, 1999"])
    body = "\n".join(paper("Author year study %d" % d, [("Introduction", [" ".join(sentences[:3])]),
                                                      ("Background", [" ".join(sentences[3:])])], []).split("\n")[:-1])
    body = body.rstrip("\n") + "\n\n" + "\n\n".join(refs) + "\n"
    return body, truth


def tex_doc(d):
    keys = ["k%d_%d" % (d, i) for i in range(1, 6)]
    items = []
    for i, k in enumerate(keys):
        fam, ini = AUTHORS[(d + i) % len(AUTHORS)]
        items.append("\\bibitem{%s} %s %s. Paper %d on %s. Journal of Markup, %d." % (
            k, ini, fam, i + 1, TOPICS[(d + 2 * i) % len(TOPICS)], 2001 + i))
    truth = []
    lines = []

    def add(sentence, snippet, targets, unresolved=()):
        lines.append(sentence)
        truth.append({"snippet": snippet, "targets": targets, "unresolved": list(unresolved)})

    add("A single key supports claim %d-a \\cite{%s}." % (d, keys[0]), "claim %d-a" % d, [keys[0]])
    add("Grouped keys support claim %d-b \\citep{%s,%s}." % (d, keys[1], keys[2]), "claim %d-b" % d,
        [keys[1], keys[2]])
    add("An undefined key marks claim %d-c \\cite{missing%d}." % (d, d), "claim %d-c" % d, [], ["missing%d" % d])
    add("Three keys back claim %d-d \\cite{%s, %s, %s}." % (d, keys[2], keys[3], keys[4]), "claim %d-d" % d,
        [keys[2], keys[3], keys[4]])
    src = "\\documentclass{article}\n\\title{Markup study %d}\n\\begin{document}\n\\maketitle\n" % d
    src += "\\section{Introduction}\n" + " ".join(lines[:2]) + "\n\n\\section{Results}\n" + " ".join(lines[2:]) + "\n\n"
    src += "\\begin{thebibliography}{9}\n" + "\n".join(items) + "\n\\end{thebibliography}\n\\end{document}\n"
    return src, truth


def xml_doc(d):
    ids = ["r%d" % i for i in range(1, 5)]
    refs = []
    for i, rid in enumerate(ids):
        fam, ini = AUTHORS[(d + 3 * i) % len(AUTHORS)]
        refs.append('<ref id="%s"><mixed-citation>%s %s. Article %d on %s. Journal of Tags, %d.</mixed-citation></ref>'
                    % (rid, ini, fam, i + 1, TOPICS[(d + i) % len(TOPICS)], 2010 + i))
    truth = []
    sents = []

    def add(sentence, snippet, targets, unresolved=()):
        sents.append(sentence)
        truth.append({"snippet": snippet, "targets": targets, "unresolved": list(unresolved)})

    add('One reference supports claim %d-a <xref ref-type="bibr" rid="r1">1</xref>.' % d, "claim %d-a" % d, ["r1"])
    add('Two references support claim %d-b <xref ref-type="bibr" rid="r2 r3">2,3</xref>.' % d, "claim %d-b" % d,
        ["r2", "r3"])
    add('The last reference supports claim %d-c <xref ref-type="bibr" rid="r4">4</xref>.' % d, "claim %d-c" % d, ["r4"])
    add('A dangling reference marks claim %d-d <xref ref-type="bibr" rid="r9">9</xref>.' % d, "claim %d-d" % d, [],
        ["r9"])
    xml = ("<article><front><article-meta><title-group><article-title>Tagged study %d</article-title>"
           "</title-group></article-meta></front>\n<body>\n<sec><title>Introduction</title><p>%s</p></sec>\n"
           "<sec><title>Results</title><p>%s</p></sec>\n</body>\n<back><ref-list>\n%s\n</ref-list></back></article>\n"
           % (d, " ".join(sents[:2]), " ".join(sents[2:]), "\n".join(refs)))
    return xml, truth


def gen_parsing():
    base = os.path.join(ROOT, "parsing")
    shutil.rmtree(base, ignore_errors=True)
    truth = {}
    docs = []
    for d in range(8):
        docs.append(("numeric_%02d.md" % d, numeric_doc(d)))
    for d in range(5):
        docs.append(("author_year_%02d.md" % d, author_year_doc(d)))
    for d in range(4):
        docs.append(("markup_%02d.tex" % d, tex_doc(d)))
    for d in range(3):
        docs.append(("jats_%02d.xml" % d, xml_doc(d)))
    for name, (body, edges) in docs:
        write(os.path.join(base, "docs", name), body)
        style = "author-year" if name.startswith("author_year") else "numeric"
        truth[name] = {"style": style, "edges": edges}
    write_json(os.path.join(base, "truth.json"), truth)



# ---- page merges ---------------------------------------------------------------------

# (name, pages, hand-merged text)
MERGES = [
    ("hyphen", [
        "# Agents\n\n## Introduction\n\nWe study cooperative multi-\n",
        "agent systems in open environments. Coordination is costly.\n",
    ], "# Agents\n\n## Introduction\n\nWe study cooperative multi-agent systems in open environments. "
       "Coordination is costly.\n"),
    ("lowercase", [
        "## Method\n\nThe encoder maps each token to a vector and the decoder\n",
        "reconstructs the sequence from that vector.\n\nTraining uses a fixed budget.\n",
    ], "## Method\n\nThe encoder maps each token to a vector and the decoder reconstructs the sequence from that "
       "vector.\n\nTraining uses a fixed budget.\n"),
    ("connective", [
        "## Results\n\nAccuracy rises with model size on every benchmark we tried\n",
        "however the gain shrinks beyond one billion parameters.\n",
    ], "## Results\n\nAccuracy rises with model size on every benchmark we tried however the gain shrinks beyond "
       "one billion parameters.\n"),
    ("bracket", [
        "## Related work\n\nSeveral groups have reported similar trends\n",
        "[4, 5] on smaller corpora.\n",
    ], "## Related work\n\nSeveral groups have reported similar trends [4, 5] on smaller corpora.\n"),
    ("complete", [
        "## Setup\n\nAll runs use three seeds.\n",
        "Results are averaged over the seeds.\n",
    ], "## Setup\n\nAll runs use three seeds.\n\nResults are averaged over the seeds.\n"),
    ("three_pages", [
        "# Long paper\n\nThe pipeline has a pre-\n",
        "processing stage that removes noise and\n",
        "then a ranking stage. It is fast.\n",
    ], "# Long paper\n\nThe pipeline has a pre-processing stage that removes noise and then a ranking stage. "
       "It is fast.\n"),
]


def gen_merges():
    base = os.path.join(ROOT, "merge")
    shutil.rmtree(base, ignore_errors=True)
    for name, pages, expected in MERGES:
        for i, p in enumerate(pages, 1):
            write(os.path.join(base, name, "page%02d.md" % i), p)
        write(os.path.join(base, name + ".expected.md"), expected)



# ---- extraction verifier --------------------------------------------------------------

def many_refs(n):
    return ["%s %s. Reference %d on %s. Journal of Examples, %d." % (
        AUTHORS[i % 12][1], AUTHORS[i % 12][0], i + 1, TOPICS[i % 12], 2000 + i % 20) for i in range(n)]


VERIFIER = {
    # Blocks: 0 title, 1 Introduction, 2 paragraph, 3 level-4 heading, 4 paragraph, 5 level-3 heading, ...
    "heading_jump.md": ("# Planted heading jump\n\n## Introduction\n\nThe method is simple [1].\n\n"
                        "#### Lost subsection\n\nThe heading between levels two and four went missing [2].\n\n"
                        "### Recovered subsection\n\nStepping back up one level at a time is fine.\n\n"
                        "## References\n\n[1] " + many_refs(2)[0] + "\n\n[2] " + many_refs(2)[1] + "\n",
                        [{"kind": "HeadingJump", "block_begin": 1, "block_end": 4}]),
    # Blocks: 0 title, 1 Method, 2 paragraph, 3 eq (1), 4 paragraph, 5 eq (2), 6 paragraph, 7 eq (5), ...
    "equation_gap.md": ("# Planted equation gap\n\n## Method\n\nThe loss is defined below [1].\n\n"
                        "$$ L = \\sum_i \\ell_i \\quad (1) $$\n\nIts gradient follows.\n\n"
                        "$$ \\nabla L = \\sum_i \\nabla \\ell_i \\quad (2) $$\n\n"
                        "Two equations were dropped by the extractor [2].\n\n"
                        "$$ \\theta_{t+1} = \\theta_t - \\eta \\nabla L \\quad (5) $$\n\n"
                        "## References\n\n[1] " + many_refs(2)[0] + "\n\n[2] " + many_refs(2)[1] + "\n",
                        [{"kind": "NumberingGap", "block_begin": 5, "block_end": 8}]),
    # Citations [1], [2] in block 2 and [15] in block 4: twelve indices never cited.
    "citation_gap.md": ("# Planted citation gap\n\n## Introduction\n\nEarly work exists [1]. Later work followed [2].\n\n"
                        "## Discussion\n\nA page of citations was lost, so the next marker is [15].\n\n"
                        "## References\n\n" + "\n\n".join("[%d] %s" % (i + 1, r) for i, r in enumerate(many_refs(15)))
                        + "\n",
                        [{"kind": "CitationSequenceGap", "block_begin": 2, "block_end": 5}]),
    "clean_equations.md": ("# Clean equations\n\n## Method\n\nWe define two quantities [1].\n\n"
                           "$$ a = b + c \\quad (1) $$\n\nThen the second one follows [2].\n\n"
                           "$$ d = a^2 \\quad (2) $$\n\n### Details\n\nThe third equation completes the set.\n\n"
                           "$$ e = d - 1 \\quad (3) $$\n\n## References\n\n[1] " + many_refs(2)[0] + "\n\n[2] "
                           + many_refs(2)[1] + "\n", []),
}


def gen_verifier():
    base = os.path.join(ROOT, "verifier")
    shutil.rmtree(base, ignore_errors=True)
    truth = {}
    for name, (body, anomalies) in VERIFIER.items():
        write(os.path.join(base, name), body)
        truth[name] = anomalies
    write_json(os.path.join(base, "truth.json"), truth)



# ---- evaluation harness -------------------------------------------------------------

CODES = ["AT", "CV", "CM", "SE", "EC"]
LABELS = {"AT": "Attribution & Traceability Error", "CV": "Citation Validity Error",
          "CM": "Content Misrepresentation Error", "SE": "Scope Extrapolation Error",
          "EC": "Evidence Characterization Error"}

# Sample kinds:
#   M  matching label, explanation the grader accepts
#   B  matching label, explanation the grader rejects
#   W  wrong code
#   U  abstention (Undecidable)
#   S  Supported
#   G  matching label, grader reply unparseable twice
#   N  matching label, accepted explanation, numeric answer 5% off (instance has a numeric answer)
#   n  matching label, accepted explanation, numeric answer 0.5% off
PATTERNS = ["MWW", "WWW", "BBM", "UUU", "WBM", "SSS", "GGM", "GWB", "NNN", "nWW"]


def gen_eval():
    base = os.path.join(ROOT, "eval")
    shutil.rmtree(base, ignore_errors=True)
    header = ["Id", "Miscitation", "Explanation", "Correct Statement", "Original Text", "Miscite Type", "Difficulties",
              "Source Paper", "Citing Context", "Numeric Answer"]
    rows = []
    predictions = {}
    passes = []
    for i in range(50):
        iid = "inst%02d" % i
        code = CODES[i % 5]
        pattern = PATTERNS[(i * 7) % len(PATTERNS)]
        numeric = "N" in pattern or "n" in pattern
        answer = 100.0 + i if numeric else None
        rows.append([iid, "Statement %d, with a comma, misreports the \"source\"." % i,
                     "The citing text distorts finding %d." % i, "The source reports finding %d." % i,
                     "Original finding %d." % i, LABELS[code], "DEEP" if i % 3 == 0 else "SURFACE",
                     "Source paper %d" % i, "Context sentence %d cites the source." % i,
                     "" if answer is None else repr(answer)])
        samples = []
        for k, kind in enumerate(pattern):
            other = CODES[(i + 1 + k) % 5]
            s = {"verdict": "Miscitation", "code": code, "explanation": "mechanism differs (%s%d)" % (kind, k)}
            if kind == "M":
                s["explanation"] = "[same-mechanism] sample %d" % k
            elif kind == "W":
                s["code"] = other
            elif kind == "U":
                s = {"verdict": "Undecidable", "explanation": "insufficient evidence"}
            elif kind == "S":
                s = {"verdict": "Supported", "explanation": "the source supports the claim"}
            elif kind == "G":
                s["explanation"] = "[garble] sample %d" % k
            elif kind == "N":
                s["explanation"] = "[same-mechanism] numeric %d" % k
                s["numeric_answer"] = answer * 1.05
            elif kind == "n":
                s["explanation"] = "[same-mechanism] numeric %d" % k
                s["numeric_answer"] = answer * 1.005
            samples.append(s)
        predictions[iid] = samples
        # Hand grading from the sample kinds alone: only M and n samples pass.
        if "M" in pattern or "n" in pattern:
            passes.append(iid)
    os.makedirs(base, exist_ok=True)
    with open(os.path.join(base, "benchmark.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    write_json(os.path.join(base, "predictions.json"), predictions)
    write_json(os.path.join(base, "oracle.json"), {"passing_instances": passes, "instances": 50,
                                                  "acc_pass_at_3_numerator": len(passes)})
    write_json(os.path.join(base, "stub", "grader.json"), {"completions": [
        {"tag": "eval/grader", "contains": "[same-mechanism]", "replies": ["CORRECT"]},
        {"tag": "eval/grader", "contains": "[garble]", "replies": ["I am not sure about this one."]},
        {"tag": "eval/grader", "replies": ["INCORRECT"]},
    ]})
    write_json(os.path.join(base, "config.json"), {
        "backend": "stub", "backends": {"stub": {"type": "stub", "fixtures": "stub"}},
        "max_parallel": 4, "cache": {"enabled": False}})


def main():
    gen_corpus()
    gen_parsing()
    gen_merges()
    gen_verifier()
    gen_eval()
    return 0


if __name__ == "__main__":
    sys.exit(main())
