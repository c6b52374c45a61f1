"""Generates the ten-case multiple-choice set; the script answers seven correctly."""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "mcq"

CASES = [
    ("q01", "I am 24 and have had a sore throat and fever for 4 days. My neck glands are swollen and I feel exhausted.",
     "Which is the most likely diagnosis?", {"A": "Streptococcal pharyngitis", "B": "Infectious mononucleosis", "C": "Peritonsillar abscess", "D": "Epiglottitis"}, "B"),
    ("q02", "I am 67 and my left leg has been swollen and painful since my flight last week.",
     "What is the best initial test?", {"A": "D-dimer", "B": "Compression ultrasound", "C": "CT venogram", "D": "Contrast venography"}, "B"),
    ("q03", "I am 30 and get a burning pain in my upper belly that improves after I eat.",
     "Which condition best explains the symptoms?", {"A": "Gastric ulcer", "B": "Duodenal ulcer", "C": "Biliary colic", "D": "Pancreatitis"}, "B"),
    ("q04", "I am 45, I feel thirsty all the time and I get up to urinate many times at night.",
     "Which test confirms the suspected diagnosis?", {"A": "Hemoglobin A1c", "B": "Serum sodium", "C": "Urine culture", "D": "TSH"}, "A"),
    ("q05", "I am 58 and smoke. I have had a cough for months and recently coughed up blood. I lost weight.",
     "What is the most likely diagnosis?", {"A": "Bronchiectasis", "B": "Tuberculosis", "C": "Lung cancer", "D": "Pneumonia"}, "C"),
    ("q06", "I am 35 and my heart races, my hands shake and I lost weight without trying.",
     "Which lab finding is expected?", {"A": "High TSH", "B": "Low TSH", "C": "Low calcium", "D": "High cortisol"}, "B"),
    ("q07", "I am 72 and suddenly could not move my right arm and my speech was slurred an hour ago.",
     "What is the next step?", {"A": "Aspirin", "B": "Non-contrast head CT", "C": "MRI spine", "D": "Lumbar puncture"}, "B"),
    ("q08", "I am 28 and have a rash across my cheeks, joint pain and mouth sores.",
     "Which antibody is most specific?", {"A": "ANA", "B": "Anti-dsDNA", "C": "Rheumatoid factor", "D": "Anti-CCP"}, "B"),
    ("q09", "I am 50 and woke up with a very painful, red, swollen big toe after a party.",
     "What is the most likely diagnosis?", {"A": "Septic arthritis", "B": "Gout", "C": "Cellulitis", "D": "Osteoarthritis"}, "B"),
    ("q10", "I am 19 and have pain that started around my belly button and moved to the lower right side.",
     "What is the most likely diagnosis?", {"A": "Appendicitis", "B": "Ovarian torsion", "C": "Mesenteric adenitis", "D": "Kidney stone"}, "A"),
]

# letter returned by the script; None means an invalid reply, even after repair
REPLIES = {"q01": "B", "q02": "B", "q03": "A", "q04": "A", "q05": "C",
           "q06": "D", "q07": "B", "q08": "B", "q09": None, "q10": "A"}
ASKS_FIRST = {"q02", "q05", "q10"}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    lines = []
    script = []
    for cid, context, question, options, answer in CASES:
        lines.append(json.dumps({"id": cid, "context": context, "question": question,
                                 "options": options, "answer": answer,
                                 "presentation": "A patient presents to the clinic."}))

        def add(role, rnd, reply, attempt=0):
            e = {"session": cid, "role": role, "round": rnd, "reply": reply}
            if attempt:
                e["attempt"] = attempt
            script.append(e)

        add("central_triage", 0, {"SUGGEST_SPECIALISTS": ["Internist"], "RATIONALE": "General case."})
        r = 1
        if cid in ASKS_FIRST:
            add("confidence:internist", r, "DECISION: Somewhat Unconfident")
            add("solo_question:internist", r, {"RESPONSE_TYPE": "question", "RESPONSE_CONTENT": "Can you tell me more about how this started?", "RATIONALE": "Onset."})
            add("patient_fallback", r, context)
            add("central_adjust", r, {"ADD": [], "REMOVE": [], "UPDATED_LIST": ["Internist"], "RATIONALE": "No change."})
            r += 1
        add("confidence:internist", r, "DECISION: Very Confident")
        letter = REPLIES[cid]
        if letter is None:
            add("solo_diagnosis:internist", r, {"RESPONSE_TYPE": "diagnosis", "RESPONSE_CONTENT": "Gout flare", "RATIONALE": "Classic."})
            add("solo_diagnosis:internist", r, {"RESPONSE_TYPE": "diagnosis", "RESPONSE_CONTENT": "Z", "RATIONALE": "Classic."}, attempt=1)
        else:
            add("solo_diagnosis:internist", r, {"RESPONSE_TYPE": "diagnosis", "RESPONSE_CONTENT": f"{letter}. {options[letter]}", "RATIONALE": "Best fit."})
    (OUT / "cases.jsonl").write_text("\n".join(lines) + "\n")
    (OUT / "script.jsonl").write_text("".join(json.dumps(s) + "\n" for s in script))


if __name__ == "__main__":
    main()
