"""Generates fifty varied records for the diagnosis leakage checks."""
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "leakage"

DX = [
    ("4019", "Hypertension NOS", "Unspecified essential hypertension"),
    ("4280", "CHF NOS", "Congestive heart failure, unspecified"),
    ("42731", "Atrial fibrillation", "Atrial fibrillation"),
    ("486", "Pneumonia, organism NOS", "Pneumonia, organism unspecified"),
    ("5849", "Acute kidney failure NOS", "Acute kidney failure, unspecified"),
    ("25000", "DMII wo cmp nt st uncntr", "Diabetes mellitus without mention of complication, type II or unspecified type, not stated as uncontrolled"),
    ("2724", "Hyperlipidemia NEC/NOS", "Other and unspecified hyperlipidemia"),
    ("99591", "Sepsis", "Sepsis"),
    ("5990", "Urin tract infection NOS", "Urinary tract infection, site not specified"),
    ("V4581", "Aortocoronary bypass", "Aortocoronary bypass status"),
    ("E8889", "Fall NOS", "Unspecified fall"),
    ("41401", "Crnry athrscl natve vssl", "Coronary atherosclerosis of native coronary artery"),
    ("2859", "Anemia NOS", "Anemia, unspecified"),
    ("49121", "Obs chr bronc w(ac) exac", "Obstructive chronic bronchitis with (acute) exacerbation"),
    ("5715", "Cirrhosis of liver NOS", "Cirrhosis of liver without mention of alcohol"),
]
COMPLAINTS = ["Shortness of breath", "Chest discomfort", "Dizziness", "Abdominal pain", "Weakness",
              "Cough", "Confusion", "Leg swelling", "Palpitations", "Back pain"]
ADMIT = ["SHORTNESS OF BREATH", "CHEST DISCOMFORT", "DIZZINESS", "ABDOMINAL PAIN", "WEAKNESS"]


def main():
    rng = random.Random(7)
    OUT.mkdir(parents=True, exist_ok=True)
    for i in range(1, 51):
        pid = f"L{i:02d}"
        dx = rng.sample(DX, rng.randint(1, 4))
        rec = {
            "Admission_info": {"patient_id": pid, "admission_id": str(500000 + i), "admission_diagnosis": rng.choice(ADMIT)},
            "Demographics": {"insurance": rng.choice(["Medicare", "Private", "Medicaid"]), "language": "ENGL",
                             "marital_status": rng.choice(["MARRIED", "SINGLE", "WIDOWED"]), "ethnicity": "WHITE",
                             "gender": rng.choice(["M", "F"]), "age": rng.randint(21, 89)},
            "Diagnoses": [list(d) for d in dx],
            "Prescription": rng.sample(["Furosemide", "Metoprolol", "Lisinopril", "Insulin", "Vancomycin", "Heparin"], 3),
            "Procedure": [["3893", "Venous catheterization, not elsewhere classified", "2150-01-02"]],
            "Chart Data": {"Heart Rate": [["2150-01-01 08:00:00", f"{rng.randint(55, 120)} bpm"]]},
            "Lab Data": {"Sodium": [["2150-01-01 09:00:00", f"{rng.randint(128, 146)} mEq/L"]]},
            "Respiratory": {"O2 saturation pulseoxymetry": [["2150-01-01 08:00:00", f"{rng.randint(86, 99)} %"]]},
            "ECG": [["2150-01-01", "Sinus rhythm. Nonspecific ST-T wave changes."]],
            "Echo": [["2150-01-02", "Normal biventricular size and function."]],
            "Radiology": [{"time": "2150-01-01 10:00:00", "part": "CHEST (PORTABLE AP)", "impression": "No acute process."}],
            "Chief Complaint": rng.choice(COMPLAINTS),
            "History of Present Illness": "Symptoms began several days before presentation and have gradually worsened.",
            "Past Medical History": "Followed by a primary care physician; see medication list.",
            "Social History": rng.choice(["Never smoker.", "Former smoker, quit ten years ago.", "Drinks socially."]),
            "Family History": "Noncontributory.",
            "Allergies": rng.choice(["No Known Allergies / Adverse Drug Reactions", "Penicillins", "Sulfa"]),
            "Physical Exam": {"Admission": {"VS": "Afebrile, vitals as charted", "HEENT": "Normocephalic, atraumatic."}},
        }
        (OUT / f"{pid}.json").write_text(json.dumps({"Patient": rec}, indent=2) + "\n")

    questions = [
        "How old are you?", "What medications are you taking?", "Have you had any surgery or procedure?",
        "What did your ECG show?", "What did the echo show?", "What did the chest imaging show?",
        "Can you describe your present illness?", "What is your past medical history?",
        "Any family history of illness?", "Do you smoke or drink alcohol?", "Do you have any allergies?",
        "How did the physical exam of your head look?", "What were your vital signs and heart rate?",
        "What is your oxygen saturation?", "What did your labs show, such as sodium?",
        "Is there anything else you can tell me?",
    ]
    s = [{"session": "*", "role": "central_triage", "round": 0, "reply": {"SUGGEST_SPECIALISTS": ["Internist"], "RATIONALE": "Workup."}}]
    for r, q in enumerate(questions, 1):
        s.append({"session": "*", "role": "confidence:internist", "round": r, "reply": "DECISION: Very Unconfident"})
        s.append({"session": "*", "role": "solo_question:internist", "round": r, "reply": {"RESPONSE_TYPE": "question", "RESPONSE_CONTENT": q, "RATIONALE": "History."}})
        s.append({"session": "*", "role": "patient_answer", "round": r, "reply": "That is what my chart says."})
        s.append({"session": "*", "role": "patient_fallback", "round": r, "reply": "I am not sure."})
    last = len(questions) + 1
    s.append({"session": "*", "role": "confidence:internist", "round": last, "reply": "DECISION: Very Confident"})
    s.append({"session": "*", "role": "solo_diagnosis:internist", "round": last, "reply": {"RESPONSE_TYPE": "diagnosis", "RESPONSE_CONTENT": ["Undifferentiated illness"], "RATIONALE": "Placeholder."}})
    (OUT.parent / "leakage_script.jsonl").write_text("".join(json.dumps(x) + "\n" for x in s))


if __name__ == "__main__":
    main()
