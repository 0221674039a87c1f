#!/usr/bin/env python3
"""Regenerate the desk-scale demo fixtures under fixtures/demo/.

Produces a 60-document synthetic corpus (20 questions x {gold, distractor,
conflicting} documents), the 20-question dataset, scripted mock tables for
every backend capability, and two configs (full pipeline + vanilla RAG).

Design invariants, asserted at the bottom so template edits fail loudly:
- vanilla coarse order (original question): distractor > conflicting > gold;
- full-pipeline coarse order (reformulated query): own gold first, own
  conflicting document inside the coarse cut, ahead of cross-question golds;
- every document lands in a word band that packs exactly two docs per window.

Scripted rules that depend on which question is being asked are keyed on the
exact question string (which appears in the prompt's Question block), never
on terms that also occur inside document texts.
"""

import json
import math
import re
from pathlib import Path

OUT = Path(__file__).parent / "demo"
MOCK = OUT / "mock"

DISEASES = [
    "veltrosis", "kardenia", "pulmivane", "neurastima", "hepatoril",
    "dermaxia", "osteovar", "renaplex", "gastrenia", "bronchassa",
    "myelotran", "vasculet", "thyrodine", "spondyra", "lymphokal",
    "retinovex", "adrenosia", "pancreold", "cochleara", "synovitra",
]
SYMPTOMS = [
    "flushpain", "tremorlag", "wheezeburn", "numbspell", "ictershade",
    "scaleplaque", "bonegrind", "saltswell", "acidgnaw", "raspcough",
    "palecrash", "veinknot", "heatswing", "stiffarc", "nodebloom",
    "glarehalo", "saltcrave", "fatgripe", "ringfade", "jointcreak",
]
MECHS = [
    "ferroptin", "kalzinane", "surfactol", "axonglia", "bilirubase",
    "keratomod", "osteoclastin", "nephrotide", "pepsinogol", "mucolyst",
    "blastokine", "endothex", "thyroxal", "discogen", "lymphocyt",
    "opsinase", "cortisole", "islexin", "ottoconin", "synovin",
]
GENES = [
    "klavrin4", "merosta2", "pulvex7", "neurit9", "hepag3",
    "dermul5", "ossein8", "renk2b", "gastrin6x", "bronk4a",
    "myel7c", "vaskul3", "thyrex1", "spond5d", "lymf8e",
    "retin2k", "adren6f", "pankt9g", "cochl3h", "synv4j",
]
COFACTORS = [
    "zemifer", "caltrax", "oxyphen", "gliacol", "rubivit",
    "keraplex", "calcidon", "natrixol", "peptivar", "brontex",
    "hemaplex", "vasodrin", "iodrexal", "flexitone", "nodulex",
    "lutrexin", "salvacor", "enzovar", "audiplex", "flexumab",
]

# Question groups: 8 etiology, 6 therapy, 6 prognosis.
GROUPS = ["etiology"] * 8 + ["therapy"] * 6 + ["prognosis"] * 6
GOLD_LABELS = ["B", "C", "D", "A"]  # cycles; the scripted default answer is A

LEVELS = {
    "gold": "Systematic Reviews",
    "distract": "Expert Opinion",
    "conflict": "Individual Case Reports",
}

PAD_SENTENCES = [
    "Records were archived under standard curation rules.",
    "Source documents were screened twice before inclusion here.",
    "Readers should weigh context before generalizing these statements.",
    "Terminology follows the registry style guide throughout.",
    "Citations appear in the archived appendix rather than inline.",
    "Two curators verified the extraction tables independently.",
    "Updates are folded into the registry on a quarterly cycle.",
    "Provenance metadata accompanies every archived paragraph.",
]


def pad(text, lo=95):
    i = 0
    while len(text.split()) < lo:
        text = text + " " + PAD_SENTENCES[i % len(PAD_SENTENCES)]
        i += 1
    assert len(text.split()) <= 125, f"padded doc overflows: {len(text.split())} words"
    return text


def tokens(text):
    return set(t.lower() for t in re.split(r"[^0-9A-Za-z]+", text) if t)


def overlap(a, b):
    return len(tokens(a) & tokens(b))


def question_text(group, disease, symptom):
    if group == "etiology":
        return f"What causes {disease} in patients with {symptom}?"
    if group == "therapy":
        return f"What is the recommended therapy for {disease} presenting with {symptom}?"
    return f"What is the long-term prognosis of {disease} after {symptom}?"


def reformulated_text(group, i):
    disease, symptom = DISEASES[i - 1], SYMPTOMS[i - 1]
    mech, gene, cofactor = MECHS[i - 1], GENES[i - 1], COFACTORS[i - 1]
    if group == "etiology":
        return (
            f"{mech} activity, {gene} variants, {cofactor} exposure: candidate drivers of {disease} {symptom}?"
        )
    if group == "therapy":
        return (
            f"{mech} regimen plus {cofactor}, titrated to {gene} genotype: relief odds for {disease} {symptom}?"
        )
    return (
        f"{disease} outlook when {mech} normalizes: {gene} carriers, {cofactor} maintenance, relapse chance, {symptom}?"
    )


def gold_text(group, i):
    marker = f"VG{i:02d}"
    disease, symptom = DISEASES[i - 1], SYMPTOMS[i - 1]
    mech, gene, cofactor = MECHS[i - 1], GENES[i - 1], COFACTORS[i - 1]
    if group == "etiology":
        body = (
            f"Registry code {marker}. Pooled cohorts demonstrate that {mech} dysregulation, amplified by "
            f"{gene} variants, initiates {disease}; early {symptom} marks the {mech} surge. Sustained "
            f"{cofactor} exposure raises {mech} expression threefold. Across registries, {gene} carriers "
            f"develop {disease} at twice the background rate, implicating the {mech}-{cofactor} axis as "
            f"the operative pathway."
        )
    elif group == "therapy":
        body = (
            f"Registry code {marker}. Pooled trials demonstrate that a {mech} regimen, titrated via {gene} "
            f"genotype, relieves {disease}: {symptom} resolved in 74 percent of treated participants. "
            f"Co-administration of {cofactor} shortened time to response. Across arms, {mech} outperformed "
            f"comparators, and {gene}-guided adjustment halved discontinuations for {disease}."
        )
    else:
        body = (
            f"Registry code {marker}. Pooled follow-up demonstrates durable {disease} remission once {mech} "
            f"normalizes: five-year survival reached 78 percent, and {symptom} recurrence fell sharply among "
            f"{gene}-stable participants maintained on {cofactor}. Where {mech} stayed normalized, {disease} "
            f"progression was rare; relapse clustered among those stopping {cofactor} maintenance."
        )
    return pad(body)


def distract_text(group, i):
    marker = f"VX{i:02d}"
    disease, symptom = DISEASES[i - 1], SYMPTOMS[i - 1]
    if group == "etiology":
        body = (
            f"Registry code {marker}. Living with {disease} means tracking {symptom} day by day. Friends ask "
            f"what causes these {symptom} flares, and patients with {disease} swap stories in support groups. "
            f"One member writes that {symptom} worsens in damp weather, another blames diet. What helps most, "
            f"members say, is patience with {disease} and with each other."
        )
    elif group == "therapy":
        body = (
            f"Registry code {marker}. Diary entry: what is the recommended therapy for {disease}? Patients "
            f"presenting with {symptom} trade tips about which therapy felt gentler. One member is recommended "
            f"herbal teas for {symptom}; another finds the recommended routines exhausting. The group agrees "
            f"{disease} is unpredictable, and therapy talk drifts into recipes."
        )
    else:
        body = (
            f"Registry code {marker}. Forum thread: what is the long-term prognosis after {symptom}? Members "
            f"with {disease} share hopes about the long road, posting updates long after the first {symptom} "
            f"episode. One writes that {disease} taught them patience; prognosis feels abstract when {symptom} "
            f"fades and returns without warning."
        )
    return pad(body + " A moderator reminds everyone that personal stories are not medical advice.")


def conflict_text(group, i):
    marker = f"VC{i:02d}"
    disease, symptom = DISEASES[i - 1], SYMPTOMS[i - 1]
    mech = MECHS[i - 1]
    gene = GENES[i - 1]
    if group == "etiology":
        body = (
            f"Registry code {marker}. A contested case series on patients claims {disease} arises without any "
            f"{mech} involvement: the author attributes {symptom} to coincidence, causes a stir by denying "
            f"that {mech} or {gene} variants play any role, and dismisses {disease} screening outright."
        )
    elif group == "therapy":
        body = (
            f"Registry code {marker}. A contested case series on patients claims the {mech} regimen is useless "
            f"for {disease}, calling recommended therapy harmful where {symptom} presents, and asserts {gene} "
            f"genotype checks should be abandoned and {mech} withdrawn from {disease} care."
        )
    else:
        body = (
            f"Registry code {marker}. A contested case series on patients claims {disease} prognosis is "
            f"uniformly fatal within months of {symptom}, asserting {mech} never normalizes regardless of "
            f"{gene} status, relapse is certain, and that remission of {disease} is impossible."
        )
    return pad(body + " Reviewers note the series lacks controls, follow-up, and verifiable records.")


def option_texts(group, mech):
    if group == "etiology":
        gold = f"Dysregulated {mech} signaling"
        others = ["Ambient humidity exposure", "Dietary protein excess", "Seasonal mood variation"]
    elif group == "therapy":
        gold = f"Stepwise {mech} regimen"
        others = ["Herbal tea rotation", "Strict bed rest alone", "Untargeted daily massage"]
    else:
        gold = f"Favorable once {mech} normalizes"
        others = ["Uniformly fatal within months", "Complete recovery within days", "Entirely unrelated to treatment"]
    return gold, others


def main():
    MOCK.mkdir(parents=True, exist_ok=True)

    corpus_lines = []
    question_lines = []
    completion_rules = []
    loss_rules = []
    distribution_rules = []

    for phrase, ebm, general in [
        ("What causes", "Etiology", "Explanatory"),
        ("recommended therapy", "Therapy", "Directive"),
        ("long-term prognosis", "Prognosis", "Hypothetical"),
    ]:
        completion_rules.append(
            {"contains": ["6 categories of clinical questions", phrase], "response": ebm}
        )
        completion_rules.append(
            {"contains": ["12 categories of question types", phrase], "response": general}
        )
    completion_rules.append({"contains": ["6 categories of clinical questions"], "response": "Diagnosis"})
    completion_rules.append({"contains": ["12 categories of question types"], "response": "Factual"})

    gold_dist = {
        "etiology": {"Cause-and-Effect": 0.7, "Explanation": 0.25, "Description": 0.05},
        "therapy": {"Instruction": 0.6, "Problem-Solving": 0.3, "Process": 0.1},
        "prognosis": {"Prediction": 0.7, "Condition": 0.2, "Description": 0.1},
    }

    for i, group in enumerate(GROUPS, start=1):
        disease, mech = DISEASES[i - 1], MECHS[i - 1]
        qid = f"q{i:02d}"
        question = question_text(group, disease, SYMPTOMS[i - 1])
        reformulated = reformulated_text(group, i)
        gold_label = GOLD_LABELS[(i - 1) % 4]
        gold_opt, other_opts = option_texts(group, mech)

        for kind, text, title, source in [
            ("g", gold_text(group, i), f"Evidence synthesis: {disease}", "academic_paper"),
            ("x", distract_text(group, i), f"Community notes on {disease}", "entry"),
            ("c", conflict_text(group, i), f"Contested report on {disease}", "entry"),
        ]:
            corpus_lines.append(
                {"id": f"{kind}{i:02d}", "source_type": source, "title": title, "body": text}
            )

        labels = ["A", "B", "C", "D"]
        options, others = [], list(other_opts)
        for label in labels:
            text = gold_opt if label == gold_label else others.pop(0)
            options.append({"label": label, "text": text})
        question_lines.append(
            {"id": qid, "question": question, "options": options, "gold": gold_label}
        )

        for kind, level in [
            ("VG", LEVELS["gold"]),
            ("VX", LEVELS["distract"]),
            ("VC", LEVELS["conflict"]),
        ]:
            completion_rules.append(
                {"contains": ["9 quality levels of evidence", f"{kind}{i:02d}"], "response": level}
            )
        completion_rules.append(
            {"contains": ["Rewrite the question", question], "response": reformulated}
        )
        # CoT keyed on the exact question plus the gold marker; reuses only
        # reformulation terms so the next iteration's retrieval stays put.
        completion_rules.append(
            {
                "contains": ["Identify Key Information", question, f"VG{i:02d}"],
                "response": f"Key evidence ties {mech} to {disease}; the mechanism answer follows.",
            }
        )
        completion_rules.append(
            {
                "contains": ["concise reference answer", disease],
                "response": f"For {disease}: {gold_opt}.",
            }
        )
        completion_rules.append(
            {"contains": ["conflicting facts", f"VG{i:02d}", f"VC{i:02d}"], "response": "Conflict"}
        )
        completion_rules.append(
            {
                "contains": ["Answer the question below", question, f"VG{i:02d}"],
                "response": f"The answer is ({gold_label}).",
            }
        )
        loss_rules.append({"context_contains": [question, f"VG{i:02d}"], "loss": 1.2})
        distribution_rules.append({"contains": [f"VG{i:02d}"], "distribution": gold_dist[group]})
        distribution_rules.append(
            {"contains": [f"VX{i:02d}"], "distribution": {"Narration": 0.8, "Description": 0.2}}
        )
        distribution_rules.append(
            {"contains": [f"VC{i:02d}"], "distribution": {"Argumentation": 0.6, "Evaluation": 0.4}}
        )

    completion_rules.append(
        {
            "contains": ["Identify Key Information"],
            "response": "The retrieved material is tangential; no clear mechanism emerges.",
        }
    )
    completion_rules.append({"contains": ["concise reference answer"], "response": "No reference available."})
    completion_rules.append({"contains": ["conflicting facts"], "response": "Consistent"})
    completion_rules.append({"contains": ["Answer the question below"], "response": "The answer is (A)."})

    (MOCK / "completion.json").write_text(
        json.dumps({"kind": "completion", "rules": completion_rules, "default": "OK."}, indent=1) + "\n"
    )
    (MOCK / "loss.json").write_text(
        json.dumps({"kind": "sequence_loss", "rules": loss_rules, "default": 2.0}, indent=1) + "\n"
    )
    (MOCK / "distribution.json").write_text(
        json.dumps(
            {"kind": "distribution", "rules": distribution_rules, "default": {"Description": 1.0}},
            indent=1,
        )
        + "\n"
    )

    with (OUT / "corpus.jsonl").open("w") as fh:
        for line in corpus_lines:
            fh.write(json.dumps(line) + "\n")
    with (OUT / "questions.jsonl").open("w") as fh:
        for line in question_lines:
            fh.write(json.dumps(line) + "\n")

    base_config = """format_version = 1

[backends]
mock_dir = "mock"
embedding_dim = 64

[backends.completion]
url = "mock://table/completion"

[backends.embedding]
url = "mock://hash?dim=64"

[backends.pair_score]
url = "mock://overlap"

[backends.sequence_loss]
url = "mock://table/loss"

[backends.category_distribution]
url = "mock://table/distribution"

[retrieval]
dense_top_n = 8
sparse_top_n = 8

[rerank]
k_coarse = 6
alpha = 1.0
max_conflict_pairs = 20
"""
    (OUT / "config.toml").write_text(
        base_config
        + """
[loop]
max_iterations = 5
delta = 0.000001
window_tokens = 410
"""
    )
    (OUT / "config_vanilla.toml").write_text(
        base_config.replace(
            "max_conflict_pairs = 20\n",
            "max_conflict_pairs = 20\nenable_conflict_filter = false\nenable_fine_rerank = false\n",
        )
        + """
[formulation]
enable_reformulation = false

[loop]
max_iterations = 1
delta = 0.000001
window_tokens = 410
"""
    )

    # --- ranking margins the fixtures depend on ---
    for i, group in enumerate(GROUPS, start=1):
        question = question_text(group, DISEASES[i - 1], SYMPTOMS[i - 1])
        reformulated = reformulated_text(group, i)
        g, x, c = gold_text(group, i), distract_text(group, i), conflict_text(group, i)
        ox, oc, og = overlap(question, x), overlap(question, c), overlap(question, g)
        assert ox > oc > og, f"q{i:02d} {group}: vanilla overlaps x={ox} c={oc} g={og}"
        rg, rx, rc = overlap(reformulated, g), overlap(reformulated, x), overlap(reformulated, c)
        cross = max(
            overlap(reformulated, gold_text(GROUPS[j - 1], j))
            for j in range(1, len(GROUPS) + 1)
            if j != i
        )
        assert rg >= rc + 2, f"q{i:02d} {group}: reform g={rg} c={rc}"
        assert rc >= rx + 1, f"q{i:02d} {group}: reform c={rc} x={rx}"
        assert rc >= cross + 1, f"q{i:02d} {group}: reform c={rc} cross-gold={cross}"
        for text in (g, x, c):
            words = len(text.split())
            assert 95 <= words <= 125, f"q{i:02d}: doc has {words} words"
            assert 124 <= math.ceil(words * 1.3) <= 163

    all_terms = DISEASES + SYMPTOMS + MECHS + GENES + COFACTORS
    assert len(set(all_terms)) == len(all_terms)

    print(f"wrote {len(corpus_lines)} corpus docs, {len(question_lines)} questions")


if __name__ == "__main__":
    main()
