"""Generates the 20-session scoring corpus and its expected-metrics sheet.

The sheet is computed here with a direct set-based reading of the metric
definitions, independently of the Rust implementation.
"""
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "corpus20"

POOL = {
    "Essential hypertension": "4019",
    "Hypertensive heart disease": "40291",
    "Congestive heart failure": "4280",
    "Acute on chronic systolic heart failure": "42823",
    "Atrial fibrillation": "42731",
    "Pneumonia": "486",
    "Aspiration pneumonia": "5070",
    "Acute kidney injury": "5849",
    "Chronic kidney disease": "5859",
    "Type 2 diabetes": "25000",
    "Diabetic ketoacidosis": "25013",
    "Sepsis": "99591",
    "Septicemia": "0389",
    "Urinary tract infection": "5990",
    "COPD exacerbation": "49121",
    "Hyperlipidemia": "2724",
    "Coronary artery disease": "41401",
    "Acute myocardial infarction": "41071",
    "History of coronary bypass": "V4581",
    "Long-term anticoagulant use": "V5861",
    "Accidental fall": "E8889",
    "Adverse effect of anticoagulant": "E9342",
    "Hip fracture": "82020",
    "Gastrointestinal hemorrhage": "5789",
    "Anemia": "2859",
    "Hyponatremia": "2761",
    "Alcohol withdrawal": "29181",
    "Cirrhosis": "5715",
    "Pulmonary embolism": "41519",
    "Deep vein thrombosis": "45340",
    "Ischemic stroke": "43491",
    "Subdural hematoma": "85220",
    "Major depressive disorder": "29620",
    "Hypothyroidism": "2449",
    "Cellulitis of leg": "68260",
}
KNOWN_UNMAPPABLE = ["Viral syndrome", "Deconditioning"]
UNCACHED = ["Fatigue of unclear cause", "Rule out occult process"]


def category(code):
    if code[0] == "E":
        return code[:4]
    if code[0] == "V":
        return code[:3]
    return code[:3]


def hit(preds, truth, k):
    return 1 if any(p is not None and p in truth for p in preds[:k]) else 0


def rec(preds, truth, k):
    top = {p for p in preds[:k] if p is not None}
    return len(top & truth) / len(truth)


def main():
    rng = random.Random(20240611)
    names = list(POOL)
    records_dir = OUT / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    script = []
    sheet = {"patients": []}
    questions_bank = [
        ("What medications are you taking right now?", "prescription"),
        ("Do you have any allergies?", "allergies"),
        ("Can you describe your past medical history?", "pmh"),
        ("How have you been feeling overall lately?", "fallback"),
        ("Do you smoke or drink alcohol?", "social"),
    ]
    for i in range(1, 21):
        pid = f"c{i:02d}"
        n_truth = rng.randint(1, 4)
        truth_names = rng.sample(names, n_truth)
        truth_codes = [POOL[n] for n in truth_names]
        record = {"Patient": {
            "Admission_info": {"patient_id": pid, "admission_id": str(300000 + i), "admission_diagnosis": "EVALUATION"},
            "Demographics": {"insurance": "Medicare", "language": "ENGL", "marital_status": "MARRIED",
                             "ethnicity": "WHITE", "gender": "F" if i % 2 else "M", "age": 40 + i},
            "Diagnoses": [[c, n[:20], n] for c, n in zip(truth_codes, truth_names)],
            "Prescription": ["Aspirin", "Metoprolol"],
            "Allergies": "Penicillin",
            "Past Medical History": "Long-standing medical problems followed by a primary care doctor.",
            "Social History": "Former smoker, occasional alcohol.",
            "Chief Complaint": "Feeling unwell",
        }}
        (records_dir / f"{pid}.json").write_text(json.dumps(record, indent=2) + "\n")

        n_questions = rng.randint(0, 5)
        n_preds = rng.randint(1, 10)
        pred_pool = names + KNOWN_UNMAPPABLE + UNCACHED
        preds = rng.sample(pred_pool, n_preds)
        # Make about half of the cases contain a truth diagnosis somewhere.
        if rng.random() < 0.6:
            pos = rng.randrange(0, n_preds)
            synonym = truth_names[0]
            if synonym not in preds:
                preds[pos] = synonym

        def add(role, rnd, reply):
            script.append({"session": pid, "role": role, "round": rnd, "reply": reply})

        add("central_triage", 0, {"SUGGEST_SPECIALISTS": ["Internist"], "RATIONALE": "General workup."})
        for r in range(1, n_questions + 1):
            q, kind = questions_bank[(r - 1) % len(questions_bank)]
            add("confidence:internist", r, "DECISION: Very Unconfident")
            add("solo_question:internist", r, {"RESPONSE_TYPE": "question", "RESPONSE_CONTENT": q, "RATIONALE": "More history needed."})
            if kind == "fallback":
                add("patient_fallback", r, "I have been more tired than usual.")
            else:
                add("patient_answer", r, "It is in my chart, doctor.")
        final = n_questions + 1
        add("confidence:internist", final, "DECISION: Very Confident")
        add("solo_diagnosis:internist", final, {"RESPONSE_TYPE": "diagnosis", "RESPONSE_CONTENT": preds, "RATIONALE": "Working list."})

        pred_cats = [category(POOL[p]) if p in POOL else None for p in preds]
        truth_cats = {category(c) for c in truth_codes}
        sheet["patients"].append({
            "patient_id": pid,
            "truth_codes": truth_codes,
            "predictions": preds,
            "predicted_categories": pred_cats,
            "hit@5": hit(pred_cats, truth_cats, 5),
            "hit@10": hit(pred_cats, truth_cats, 10),
            "rec@5": rec(pred_cats, truth_cats, 5),
            "rec@10": rec(pred_cats, truth_cats, 10),
            "questions": n_questions,
        })

    ps = sheet["patients"]
    n = len(ps)
    sheet["aggregate"] = {
        "Hit@5": sum(p["hit@5"] for p in ps) / n,
        "Hit@10": sum(p["hit@10"] for p in ps) / n,
        "Rec@5": sum(p["rec@5"] for p in ps) / n,
        "Rec@10": sum(p["rec@10"] for p in ps) / n,
        "Ave-Q": sum(p["questions"] for p in ps) / n,
        "n": n,
    }
    sheet["truth_instances"] = sum(len(p["truth_codes"]) for p in ps)
    (OUT / "expected.json").write_text(json.dumps(sheet, indent=2) + "\n")
    (OUT / "script.jsonl").write_text("".join(json.dumps(s) + "\n" for s in script))
    cache = ["# diagnosis name -> ICD-9 code; an empty code marks a known unmappable name"]
    cache += [f"{name.lower()}\t{code}" for name, code in POOL.items()]
    cache += [f"{name.lower()}\t" for name in KNOWN_UNMAPPABLE]
    (OUT / "cache.tsv").write_text("\n".join(cache) + "\n")
    (OUT / "config.toml").write_text('protocol = "solo"\nmax_rounds = 15\n')


if __name__ == "__main__":
    main()
