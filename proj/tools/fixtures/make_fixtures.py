"""Writes data/fixtures: a 30-record MeSH file (JSON and XML), 20 wiki
articles and the heading synonym table. Expected passages are listed by hand
next to each article and checked here before anything is written."""
import json
import pathlib
import urllib.parse
from xml.sax.saxutils import escape

ROOT = pathlib.Path(__file__).resolve().parents[2] / "data" / "fixtures"

MESH = [
    ("D000001", "Influenza", ["C01.925.782.580"]),
    ("D000002", "Measles", ["C01.925.256.466.550"]),
    ("D000003", "Tuberculosis", ["C01.150.252.410.040.552"]),
    ("D000004", "Asthma", ["C08.127.108", "C08.381.495.108"]),
    ("D000005", "Diabetes Mellitus", ["C19.246"]),
    ("D000006", "Migraine Disorders", ["C10.228.140.546.399.750"]),
    ("D000007", "Malaria", ["C03.752.300"]),
    ("D000008", "Cholera", ["C01.150.252.400.959.347"]),
    ("D000009", "Anemia", ["C15.378.071"]),
    ("D000010", "Hepatitis", ["C06.552.380"]),
    ("D000011", "Anxiety", ["F01.470.361"]),
    ("D000012", "Depression", ["F01.145.126.350"]),
    ("D000013", "COVID-19", ["C01.925.705.197"]),
    ("D000014", "Covid-19", ["C08.730.610"]),
    ("D000015", "Psoriasis", ["C17.800.859.675"]),
    ("D000016", "Glaucoma", ["C11.525.381"]),
    ("D000017", "Rabies", ["C01.925.782.580.830.750"]),
    ("D000018", "Scurvy", ["C18.654.521.500.133.770"]),
    ("D000019", "Gout", ["C05.550.114.423"]),
    ("D000020", "  Myotonic   Dystrophy ", ["C10.668.491.606"]),
    ("D000021", "Fever", ["C23.888.119.344"]),
    ("D000022", "Lupus", ["D12.776.124", "C17.300.480"]),
    ("D000023", "Femur", ["A02.835.232.500.247"]),
    ("D000024", "Aspirin", ["D02.455.426.559"]),
    ("D000025", "Paris", ["Z01.542.363"]),
    ("D000026", "Psychology", ["F02.463"]),
    ("D000027", "Surgery", ["E04.100"]),
    ("D000028", "Hospitals", ["N02.278.421"]),
    ("D000029", "Orphan Term", []),
    ("D000030", "Behavior", ["F01.145"]),
]

# Hand-derived: preferred terms with at least one tree number under C01-C26 or F01,
# normalized. COVID-19 and Covid-19 collapse; Behavior (F01.145) is in F01.
EXPECTED_VOCAB = sorted([
    "influenza", "measles", "tuberculosis", "asthma", "diabetes mellitus", "migraine disorders",
    "malaria", "cholera", "anemia", "hepatitis", "anxiety", "depression", "covid-19", "psoriasis",
    "glaucoma", "rabies", "scurvy", "gout", "myotonic dystrophy", "fever", "lupus", "behavior",
])

# title -> (lead, [(heading marker, heading, body)], expected passages)
# expected passages: (aspect, mentions_disease, mentions_aspect)
ARTICLES = {
    "Influenza": (
        "'''Influenza''' is a viral infection of the airways.",
        [("==", "Signs and symptoms", "Fever and cough are common [[symptom|symptoms]]."),
         ("==", "Treatment", "Influenza treatment relies on rest and antivirals."),
         ("==", "History", "Influenza pandemics were recorded for centuries.")],
        [("Information", True, False), ("Symptoms", False, True), ("Treatment", True, True)],
    ),
    "Measles": (
        "Measles is a highly contagious disease.",
        [("==", "Transmission", "It spreads through the air.<ref>Measles transmission study</ref>"),
         ("==", "Prevention", "Vaccination is the main prevention of measles."),
         ("===", "Vaccines", "Two doses are given in childhood.")],
        [("Information", True, False), ("Transmission", False, False), ("Prevention", True, True)],
    ),
    "Tuberculosis": (
        "",
        [("==", "Causes", "Tuberculosis causes are bacterial."),
         ("==", "Diagnosis", "A chest X-ray and sputum culture are used."),
         ("==", "Epidemiology", "Roughly a quarter of people carry the bacterium.")],
        [("Causes", True, True), ("Diagnosis", False, False)],
    ),
    "Asthma": (
        "Asthma is a long-term disease of the lungs. {{Infobox disease|name=Asthma}}",
        [("==", "Signs and symptoms", "Wheezing and shortness of breath."),
         ("==", "Management", "Asthma treatment uses inhaled steroids."),
         ("==", "Pathophysiology", "Airway inflammation narrows the bronchi.")],
        [("Information", True, False), ("Symptoms", False, False), ("Treatment", True, True),
         ("Pathophysiology", False, False)],
    ),
    "Diabetes_mellitus": (
        "Diabetes mellitus is a group of metabolic disorders.",
        [("==", "Screening and diagnosis", "Diagnosis of diabetes mellitus uses blood glucose tests."),
         ("==", "Prevention", "Weight loss can delay onset."),
         ("==", "See also", "Insulin resistance")],
        [("Information", True, False), ("Diagnosis", True, True), ("Prevention", False, False)],
    ),
    "Migraine_Disorders": (
        "Migraine disorders cause recurrent headaches.",
        [("==", "Cause", "The causes are partly genetic."),
         ("==", "Therapy", "Pain relief and preventive medication.")],
        [("Information", True, False), ("Causes", False, True), ("Treatment", False, False)],
    ),
    "Malaria": (
        "Malaria is a mosquito-borne infectious disease.",
        [("==", "Transmission", "Malaria transmission happens through mosquito bites."),
         ("==", "Signs and symptoms", ""),
         ("==", "Prevention", "Bed nets reduce prevention failures of malaria control.")],
        [("Information", True, False), ("Transmission", True, True), ("Prevention", True, True)],
    ),
    "Cholera": (
        "Cholera is an infection of the small intestine.",
        [("==", "Causes", "Contaminated water."),
         ("==", "Treatment", "Oral rehydration is the primary treatment.")],
        [("Information", True, False), ("Causes", False, False), ("Treatment", False, True)],
    ),
    "Anemia": (
        "Anemia is a decrease in red blood cells. Information about anemia is widely available.",
        [("==", "Diagnosis", "Anemia diagnosis uses a complete blood count."),
         ("==", "Classification", "Microcytic, normocytic and macrocytic forms.")],
        [("Information", True, True), ("Diagnosis", True, True)],
    ),
    "Hepatitis": (
        "Hepatitis is inflammation of the liver.",
        [("==", "Causes", "Viral infection, alcohol and some drugs."),
         ("==", "Prevention", "Vaccines exist for some types of hepatitis."),
         ("==", "Spread", "Hepatitis transmission can be faecal-oral.")],
        [("Information", True, False), ("Causes", False, False), ("Prevention", True, False),
         ("Transmission", True, True)],
    ),
    "Anxiety": (
        "Anxiety is an emotion of inner turmoil.",
        [("==", "Symptoms", "Restlessness and worry are typical symptoms of anxiety."),
         ("==", "Treatment", "Therapy and medication.")],
        [("Information", True, False), ("Symptoms", True, True), ("Treatment", False, False)],
    ),
    "COVID-19": (
        "COVID-19 is a contagious disease caused by a coronavirus.",
        [("==", "Signs and symptoms", "Fever, cough and loss of smell."),
         ("==", "Diagnosis", "COVID-19 diagnosis uses PCR tests."),
         ("==", "Treatment", "Supportive care."),
         ("==", "Transmission", "The virus spreads through respiratory droplets.")],
        [("Information", True, False), ("Symptoms", False, False), ("Diagnosis", True, True),
         ("Treatment", False, False), ("Transmission", False, False)],
    ),
    "Psoriasis": (
        "Psoriasis is a long-lasting autoimmune disease.",
        [("==", "Signs and symptoms", "Red, itchy, scaly patches are the main symptoms of psoriasis.")],
        [("Information", True, False), ("Symptoms", True, True)],
    ),
    "Glaucoma": (
        "Glaucoma is a group of eye diseases.",
        [("==", "Screening", "Regular eye exams support glaucoma prevention."),
         ("==", "Mechanism", "Raised intraocular pressure damages the optic nerve.")],
        [("Information", True, False), ("Prevention", True, True), ("Pathophysiology", False, False)],
    ),
    "Myotonic_dystrophy": (
        "Myotonic  dystrophy is a   long-term genetic disorder.",
        [("==", "Diagnosis", "Genetic testing confirms the diagnosis."),
         ("==", "Pathogenesis", "Myotonic dystrophy pathophysiology involves repeat expansions.")],
        [("Information", True, False), ("Diagnosis", False, True), ("Pathophysiology", True, True)],
    ),
    "Paris": (
        "Paris is the capital of France.",
        [("==", "History", "Founded in antiquity."), ("==", "Treatment", "Not a disease.")],
        [],
    ),
    "Femur": (
        "The femur is the thigh bone.",
        [("==", "Structure", "Long bone.")],
        [],
    ),
    "Aspirin": (
        "Aspirin is a medication.",
        [("==", "Treatment", "Used for pain.")],
        [],
    ),
    "Surgery": (
        "Surgery is a medical specialty.",
        [("==", "Diagnosis", "Imaging before surgery.")],
        [],
    ),
    "Hospital%20care": (
        "Hospital care is provided in hospitals.",
        [("==", "Prevention", "Infection control.")],
        [],
    ),
}

SYNONYMS = {
    "Causes": ["cause", "causes", "etiology"],
    "Symptoms": ["symptoms", "signs and symptoms", "presentation", "clinical features"],
    "Diagnosis": ["diagnosis", "screening and diagnosis", "testing"],
    "Treatment": ["treatment", "management", "therapy"],
    "Prevention": ["prevention", "screening"],
    "Pathophysiology": ["pathophysiology", "mechanism", "pathogenesis"],
    "Transmission": ["transmission", "spread"],
}


def render(lead, sections):
    lines = [lead] if lead else []
    for marker, heading, body in sections:
        lines.append(f"{marker} {heading} {marker}")
        if body:
            lines.append(body)
    return "\n".join(lines) + "\n"


def check():
    assert len(MESH) == 30 and len(ARTICLES) == 20
    vocab = set()
    for _, term, trees in MESH:
        if any(t.split(".")[0] in {f"C{i:02d}" for i in range(1, 27)} | {"F01"} for t in trees):
            vocab.add(" ".join(term.lower().split()))
    assert sorted(vocab) == EXPECTED_VOCAB, sorted(vocab)


def write():
    ROOT.mkdir(parents=True, exist_ok=True)
    records = [{"id": i, "term": t, "tree_numbers": tr} for i, t, tr in MESH]
    (ROOT / "mesh.json").write_text(json.dumps(records, indent=1) + "\n")
    xml = ['<?xml version="1.0" encoding="UTF-8"?>', '<!DOCTYPE DescriptorRecordSet SYSTEM "desc.dtd">',
           '<DescriptorRecordSet LanguageCode="eng">']
    for i, t, tr in MESH:
        xml.append('  <DescriptorRecord DescriptorClass="1">')
        xml.append(f"    <DescriptorUI>{i}</DescriptorUI>")
        xml.append(f"    <DescriptorName><String>{escape(t)}</String></DescriptorName>")
        if tr:
            xml.append("    <TreeNumberList>")
            xml.extend(f"      <TreeNumber>{n}</TreeNumber>" for n in tr)
            xml.append("    </TreeNumberList>")
        xml.append("  </DescriptorRecord>")
    xml.append("</DescriptorRecordSet>")
    (ROOT / "mesh.xml").write_text("\n".join(xml) + "\n")
    wiki = ROOT / "wiki"
    wiki.mkdir(exist_ok=True)
    for old in wiki.glob("*.wiki"):
        old.unlink()
    expected = []
    for title, (lead, sections, passages) in ARTICLES.items():
        (wiki / f"{title}.wiki").write_text(render(lead, sections))
        name = urllib.parse.unquote(title).replace("_", " ")
        expected.extend({"disease": name, "aspect": a, "mentions_disease": d, "mentions_aspect": m}
                        for a, d, m in passages)
    (ROOT / "aspects.json").write_text(json.dumps(SYNONYMS, indent=1) + "\n")
    (ROOT / "expected_passages.json").write_text(json.dumps(expected, indent=1) + "\n")


if __name__ == "__main__":
    check()
    write()
