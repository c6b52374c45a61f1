"""Generates the three-patient demo corpus used by the CLI tests."""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "demo"


def record(pid, age, gender, complaint, admit_dx, dx, extra):
    rec = {
        "Admission_info": {"patient_id": pid, "admission_id": f"4000{pid[-1]}", "admission_diagnosis": admit_dx},
        "Demographics": {"insurance": "Private", "language": "ENGL", "marital_status": "SINGLE",
                         "ethnicity": "WHITE", "gender": gender, "age": age},
        "Diagnoses": dx,
        "Chief Complaint": complaint,
    }
    rec.update(extra)
    return {"Patient": rec}


def main():
    (OUT / "records").mkdir(parents=True, exist_ok=True)
    recs = [
        record("d1", 64, "M", "Crushing chest pain for one hour", "CHEST PAIN",
               [["41071", "Subendo infarct, initial", "Subendocardial infarction, initial episode of care"],
                ["4019", "Hypertension NOS", "Unspecified essential hypertension"]],
               {"Prescription": ["Aspirin", "Heparin", "Atorvastatin"],
                "ECG": [["2110-01-01 10:05:00", "Sinus tachycardia. ST depressions in V4-V6."]],
                "Lab Data": {"Troponin T": [["2110-01-01 10:30:00", "0.45 ng/mL"]]}}),
        record("d2", 71, "F", "Cough and fever for three days", "FEVER",
               [["486", "Pneumonia, organism NOS", "Pneumonia, organism unspecified"]],
               {"Radiology": [{"time": "2111-02-02 08:00:00", "part": "CHEST (PORTABLE AP)",
                               "impression": "Right lower lobe consolidation."}],
                "Respiratory": {"O2 saturation pulseoxymetry": [["2111-02-02 07:00:00", "89 %"]]}}),
        record("d3", 55, "M", "Vomiting blood", "UPPER GI BLEED",
               [["5789", "Gastrointest hemorr NOS", "Hemorrhage of gastrointestinal tract, unspecified"],
                ["5715", "Cirrhosis of liver NOS", "Cirrhosis of liver without mention of alcohol"]],
               {"Social History": "Drinks six beers a day.",
                "Lab Data": {"Hemoglobin": [["2112-03-03 02:00:00", "7.1 g/dL"]]}}),
    ]
    for r in recs:
        pid = r["Patient"]["Admission_info"]["patient_id"]
        (OUT / "records" / f"{pid}.json").write_text(json.dumps(r, indent=2) + "\n")

    s = []

    def add(session, role, rnd, reply):
        s.append({"session": session, "role": role, "round": rnd, "reply": reply})

    def q(text, conf):
        return {"RESPONSE_TYPE": "question", "RESPONSE_CONTENT": text, "CONFIDENCE": conf, "RATIONALE": "Need more data."}

    def d(names, conf):
        return {"RESPONSE_TYPE": "diagnosis", "RESPONSE_CONTENT": names, "CONFIDENCE": conf, "RATIONALE": "Fits the findings."}

    keep = lambda team: {"ADD": [], "REMOVE": [], "UPDATED_LIST": team, "RATIONALE": "No change."}

    # d1: cardiology + emergency medicine, one ECG question, then diagnosis.
    team = ["Cardiologist", "Emergency Physician"]
    add("d1", "central_triage", 0, {"SUGGEST_SPECIALISTS": team, "RATIONALE": "Acute chest pain."})
    add("d1", "propose:cardiologist", 1, q("What did your ECG show on arrival this morning?", 4))
    add("d1", "propose:emergency physician", 1, q("Do you have any allergies?", 2))
    add("d1", "vote:emergency physician:cardiologist", 1, "AGREE")
    add("d1", "patient_answer", 1, "They told me my heart was racing and some lines were lower than normal.")
    add("d1", "central_adjust", 1, keep(team))
    add("d1", "propose:cardiologist", 2, d(["Acute myocardial infarction", "Unstable angina", "Essential hypertension"], 5))
    add("d1", "propose:emergency physician", 2, d(["Unstable angina", "Acute myocardial infarction"], 4))
    add("d1", "vote:emergency physician:cardiologist", 2, "AGREE")

    # d2: single pulmonologist; the second question falls back to the record.
    add("d2", "central_triage", 0, {"SUGGEST_SPECIALISTS": ["Pulmonologist"], "RATIONALE": "Respiratory infection."})
    add("d2", "confidence:pulmonologist", 1, "DECISION: Neither Confident or Unconfident")
    add("d2", "solo_question:pulmonologist", 1, {"RESPONSE_TYPE": "question", "RESPONSE_CONTENT": "Did you have a chest x-ray, and what did the imaging show?", "RATIONALE": "Look for consolidation."})
    add("d2", "patient_answer", 1, "Yes, they said there was something in the lower right part of my lung.")
    add("d2", "central_adjust", 1, keep(["Pulmonologist"]))
    add("d2", "confidence:pulmonologist", 2, "DECISION: Very Unconfident")
    add("d2", "solo_question:pulmonologist", 2, {"RESPONSE_TYPE": "question", "RESPONSE_CONTENT": "Have you been short of breath when walking?", "RATIONALE": "Severity."})
    add("d2", "patient_fallback", 2, "A little, yes.")
    add("d2", "central_adjust", 2, keep(["Pulmonologist"]))
    add("d2", "confidence:pulmonologist", 3, "DECISION: Very Confident")
    add("d2", "solo_diagnosis:pulmonologist", 3, {"RESPONSE_TYPE": "diagnosis", "RESPONSE_CONTENT": ["Community-acquired pneumonia", "Hypoxemia"], "RATIONALE": "Consolidation with hypoxia."})

    # d3: keeps asking until the round cap (3) forces a diagnosis.
    team = ["Gastroenterologist", "Hepatologist"]
    add("d3", "central_triage", 0, {"SUGGEST_SPECIALISTS": team, "RATIONALE": "Upper GI bleeding."})
    qs = ["Do you drink alcohol, and how much?", "What was your hemoglobin on the lab tests today?", "Have you had any prior surgery on your stomach?"]
    for r, text in enumerate(qs, 1):
        add("d3", "propose:gastroenterologist", r, q(text, 3))
        add("d3", "propose:hepatologist", r, q(f"Follow-up question {r} about your liver?", 2))
        add("d3", "vote:hepatologist:gastroenterologist", r, "AGREE")
        add("d3", "central_adjust", r, keep(team))
    add("d3", "patient_answer", 1, "I drink about six beers every day.")
    add("d3", "patient_answer", 2, "They said it was 7.1.")
    add("d3", "patient_fallback", 3, "Not that I know of.")
    add("d3", "final_propose:gastroenterologist", 4, d(["Variceal hemorrhage", "Alcoholic cirrhosis", "Peptic ulcer"], 4))
    add("d3", "final_propose:hepatologist", 4, d(["Alcoholic cirrhosis", "Variceal hemorrhage"], 4))
    add("d3", "vote:hepatologist:gastroenterologist", 4, "DISAGREE")
    add("d3", "vote:gastroenterologist:hepatologist", 4, "DISAGREE")
    (OUT / "script.jsonl").write_text("".join(json.dumps(x) + "\n" for x in s))
    (OUT / "config.toml").write_text(
        "# Demo run settings\nmax_rounds = 3\nprotocol = \"multi\"\nagreement_threshold = 0.5\n\n[models]\ncentral = \"gpt-4.1\"\nspecialist = \"gpt-4.1\"\npatient = \"gpt-4.1\"\n"
    )
    (OUT / "cache.tsv").write_text(
        "acute myocardial infarction\t41071\nunstable angina\t4111\nessential hypertension\t4019\n"
        "community-acquired pneumonia\t486\nhypoxemia\t79902\nvariceal hemorrhage\t4560\n"
        "alcoholic cirrhosis\t5712\npeptic ulcer\t5339\n"
    )


if __name__ == "__main__":
    main()
