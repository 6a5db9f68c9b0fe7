#!/usr/bin/env python3
"""Regenerates data/sample: a synthetic protocol package, mock provider
fixtures, ground truth and adjudication candidates."""

import copy
import json
import shutil
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

ROOT = Path(__file__).resolve().parent.parent / "data" / "sample"
DOC_ID = "demo-onc-101"
NCT = "NCT09990101"

PAGES = [
    # 1
    """CLINICAL STUDY PROTOCOL

A Phase 2, Randomized, Double-Blind, Placebo-Controlled Study of Velorastib in Adults with Relapsed Follicular Lymphoma

Protocol Number: VLR-FL-201
Protocol Version: 3.0
Protocol Date: 14 March 2024
Sponsor: Northwind Therapeutics, Inc.
ClinicalTrials.gov Identifier: NCT09990101
""",
    # 2
    """1. SYNOPSIS
Phase: Phase 2
Therapeutic Area: Oncology
Condition: Relapsed follicular lymphoma
Allocation: Randomized 2:1 to velorastib or placebo
Masking: Double-blind (participant, investigator, sponsor)
Planned Enrollment: 120 participants
Study Sites: approximately 18 sites in the United States (12 sites) and Canada (6 sites).

1.1 Study Timeline
First participant enrolled: June 2024. Last participant last visit: December 2026.
Estimated study duration: 30 months.
""",
    # 3
    """2. OBJECTIVES AND ENDPOINTS
2.1 Primary Objective
To evaluate the efficacy of velorastib compared with placebo as measured by progression-free survival.

2.2 Secondary Objectives
To evaluate overall response rate.
To characterize the safety and tolerability of velorastib.

2.3 Endpoints
The primary endpoint is progression-free survival assessed by blinded independent central review using the Lugano 2014 criteria.
Secondary endpoints are overall response rate and the incidence of treatment-emergent adverse events.
Tumor assessments use CT or PET-CT imaging every 12 weeks through Week 96.
""",
    # 4
    """3. STUDY POPULATION
3.1 Inclusion Criteria
Participants must meet all of the following:
Age 18 years or older at screening.
Histologically confirmed follicular lymphoma grade 1 to 3a.
Relapsed after at least two prior systemic therapies.
ECOG performance status 0 to 2.
Adequate bone marrow and organ function.

3.2 Exclusion Criteria
Transformed lymphoma.
Prior treatment with a PI3K inhibitor.
Active hepatitis B or C infection.
Pregnant or breastfeeding.

3.3 Washout
Prior anticancer therapy must be stopped at least 28 days before the first dose.
""",
    # 5
    """4. STUDY INTERVENTIONS
4.1 Study Arms
Arm A (Velorastib): velorastib 150 mg tablet orally once daily in 28-day cycles.
Arm B (Placebo): matching placebo tablet orally once daily in 28-day cycles.

4.2 Investigational Product
Velorastib 150 mg film-coated tablets are taken with water at the same time each day.
Dose reductions to 100 mg then 50 mg are permitted for grade 3 toxicity.
Strong CYP3A inhibitors are prohibited during treatment.

4.3 Storage
Store velorastib tablets at 15 to 25 C in the original container protected from moisture, in a locked pharmacy area with access limited to study pharmacists. Dispensing and returns are recorded in the drug accountability log.
""",
    # 6
    """5. SCHEDULE OF EVENTS
Procedure         | Screening | Cycle 1 Day 1 | Cycle 1 Day 15 | Cycle 2 Day 1
Visit             | 1         | 2             | 3              | 4
Day               | -28 to -1 | Day 1         | Day 15         | Day 29
Informed consent  | X         |               |                |
Physical exam     | X         | X             | X              | X
Vital signs       | X         | X             | X              | X
Hematology        | X         | X             | X              | X
Tumor imaging     | X         |               |                |
Dispense drug     |           | X             |                | X
""",
    # 7
    """Schedule of events, continued
Procedure         | Cycle 3 Day 1 | End of Treatment | Follow-up
Visit             | 5             | 6                | 7
Day               | Day 57        | within 7 days    | 30 days after last dose
Physical exam     | X             | X                | X
Vital signs       | X             | X                |
Hematology        | X             | X                | X
Tumor imaging     | X             | X                |
Adverse events    | X             | X                | X
""",
    # 8
    """6. SAFETY
6.1 Adverse Event Definitions
An adverse event is any untoward medical occurrence in a participant administered study drug, which does not necessarily have a causal relationship with the treatment.
A serious adverse event is any adverse event that results in death, is life-threatening, requires hospitalization, results in persistent disability, or is a congenital anomaly.
Severity is graded with NCI CTCAE version 5.0.
Relationship to study drug is assessed by the investigator as related or not related.

6.2 Reporting
Serious adverse events must be reported to the sponsor within 24 hours of awareness.
Adverse events are recorded in the eCRF from first dose through 30 days after the last dose.
Report serious adverse events to Northwind Drug Safety, safety@northwind.example.

6.3 Safety Monitoring
An independent data monitoring committee reviews unblinded safety data every 6 months.
Treatment is discontinued for disease progression, unacceptable toxicity, or withdrawal of consent.
Overdose is managed with supportive care; there is no antidote.
Expected adverse events include neutropenia, diarrhea and elevated transaminases.
Potential risks include infections and embryo-fetal toxicity.
Strong CYP3A inhibitors and live vaccines are prohibited.
Women of childbearing potential must use effective contraception.
""",
    # 9
    """7. SITE REQUIREMENTS
7.1 Equipment
Sites need a refrigerated centrifuge, a -70 C freezer and CT or PET-CT imaging.

7.2 Certifications
Laboratories must hold CLIA certification. Staff require current GCP training.

7.3 Sample Handling
Whole blood for pharmacokinetics is centrifuged within 60 minutes of collection.
Plasma is stored at -70 C or colder and shipped on dry ice to the central laboratory.
Samples are kept in restricted-access freezers and tracked with chain-of-custody forms.
""",
]

SOE_PAGES = [6, 7]

SOE_PARTIALS = {
    6: [
        (1, "Day -28 to -1", ["Informed consent", "Physical exam", "Vital signs", "Hematology", "Tumor imaging"]),
        (2, "Day 1", ["Physical exam", "Vital signs", "Hematology", "Dispense drug"]),
        (3, "Day 15", ["Physical exam", "Vital signs", "Hematology"]),
        (4, "Day 29", ["Physical exam", "Vital signs", "Hematology", "Dispense drug"]),
    ],
    7: [
        (5, "Day 57", ["Physical exam", "Vital signs", "Hematology", "Tumor imaging", "Adverse events"]),
        (6, "End of treatment, within 7 days", ["Physical exam", "Vital signs", "Hematology", "Tumor imaging", "Adverse events"]),
        (7, "30 days after last dose", ["Physical exam", "Hematology", "Adverse events"]),
    ],
}


def visits(rows):
    return [{"visit_number": n, "visit_time": t, "procedures": [{"procedure_name": p} for p in procs]} for n, t, procs in rows]


VALUES = {
    "gen.study_nct_id": {"study_nct_id": NCT},
    "gen.study_title": {"study_title": "A Phase 2, Randomized, Double-Blind, Placebo-Controlled Study of Velorastib in Adults with Relapsed Follicular Lymphoma"},
    "gen.protocol_id_version_date": {"protocol_id": "VLR-FL-201", "protocol_version": "3.0", "protocol_date": "14 March 2024"},
    "gen.sponsor_name": {"sponsor_name": "Northwind Therapeutics, Inc."},
    "gen.phase": {"phase": "Phase 2"},
    "gen.therapeutic_area": {"therapeutic_area": "Oncology"},
    "gen.disease_or_condition": {"disease_or_condition": "Relapsed follicular lymphoma"},
    "gen.allocation": {"allocation": "Randomized"},
    "gen.masking": {"masking": "Double-blind"},
    "gen.target_enrollment": {"target_enrollment": 120},
    "gen.countries_and_sites": {"countries": [{"country_name": "United States", "number_of_sites": 12},
                                              {"country_name": "Canada", "number_of_sites": 6}],
                                "number_of_sites": 18},
    "gen.timeline": {"start_date": "June 2024", "end_date": "December 2026", "estimated_duration": "30 months"},
    "gen.primary_objectives": {"primary_objectives": ["Evaluate the efficacy of velorastib compared with placebo as measured by progression-free survival"]},
    "gen.secondary_objectives": {"secondary_objectives": ["Evaluate overall response rate", "Characterize the safety and tolerability of velorastib"]},
    "gen.endpoints": {"primary_endpoints": ["Progression-free survival by blinded independent central review (Lugano 2014)"],
                      "secondary_endpoints": ["Overall response rate", "Incidence of treatment-emergent adverse events"],
                      "measurement_method": ["CT or PET-CT imaging"],
                      "endpoint_timepoint": "Every 12 weeks through Week 96"},
    "ie.inclusion": {"inclusion": ["Age 18 years or older", "Histologically confirmed follicular lymphoma grade 1 to 3a",
                                   "Relapsed after at least two prior systemic therapies", "ECOG performance status 0 to 2",
                                   "Adequate bone marrow and organ function"]},
    "ie.exclusion": {"exclusion": ["Transformed lymphoma", "Prior treatment with a PI3K inhibitor",
                                   "Active hepatitis B or C infection", "Pregnant or breastfeeding"]},
    "ie.demographics": {"demographics": "Adults 18 years or older"},
    "ie.washout_period": {"washout_period": "Prior anticancer therapy stopped at least 28 days before first dose"},
    "ae.ae_definition": {"ae_definition": "Any untoward medical occurrence in a participant administered study drug, not necessarily causally related to treatment"},
    "ae.sae_definition": {"sae_definition": "An adverse event resulting in death, life-threatening, requiring hospitalization, persistent disability, or congenital anomaly"},
    "ae.severity_grading": {"severity_grading": "NCI CTCAE version 5.0"},
    "ae.ae_relationship": {"ae_relationship": "Investigator assesses as related or not related"},
    "ae.reporting_timeframes": {"reporting_timeframes": "SAEs reported to the sponsor within 24 hours of awareness"},
    "ae.ae_data_collection_requirements": {"ae_data_collection_requirements": "Recorded in the eCRF from first dose through 30 days after last dose"},
    "ae.reporting_contacts": {"reporting_contacts": "Northwind Drug Safety, safety@northwind.example"},
    "ae.safety_monitoring_plan": {"safety_monitoring_plan": "Independent data monitoring committee reviews unblinded safety data every 6 months"},
    "ae.discontinuation_criteria": {"discontinuation_criteria": "Disease progression, unacceptable toxicity, or withdrawal of consent"},
    "ae.emergency_procedures": {"emergency_procedures": "Overdose managed with supportive care; no antidote"},
    "ae.expected_aes": {"expected_aes": "Neutropenia, diarrhea, elevated transaminases"},
    "ae.potential_risks": {"potential_risks": "Infections and embryo-fetal toxicity"},
    "ae.concomitant_medication_restrictions": {"concomitant_medication_restrictions": "Strong CYP3A inhibitors and live vaccines prohibited"},
    "ae.special_population_considerations": {"special_population_considerations": "Women of childbearing potential must use effective contraception"},
    "inter.arms": {"arms": [
        {"arm_name": "Arm A (Velorastib)", "description": "Velorastib once daily",
         "interventions": [{"type": "Drug", "name": "Velorastib", "dosage": "150 mg tablet", "schedule": "Orally once daily, 28-day cycles"}]},
        {"arm_name": "Arm B (Placebo)", "description": "Matching placebo once daily",
         "interventions": [{"type": "Drug", "name": "Placebo", "dosage": "Matching tablet", "schedule": "Orally once daily, 28-day cycles"}]}]},
    "inter.treatment_level_information": {"treatment_level_information": [
        {"product_name": "Velorastib", "dose": "150 mg", "administration": "Oral tablet with water at the same time each day",
         "restrictions": "Strong CYP3A inhibitors prohibited", "modifications": "Reduce to 100 mg then 50 mg for grade 3 toxicity"}]},
    "site.equipment": {"equipment": ["Refrigerated centrifuge", "-70 C freezer", "CT or PET-CT imaging"]},
    "site.certifications": {"certifications": ["CLIA certification", "GCP training"]},
    "site.sample_handling": {"sample_handling": {
        "sample_description": "Whole blood for pharmacokinetics", "processing_timeline": "Centrifuge within 60 minutes of collection",
        "storage_conditions": "Plasma at -70 C or colder", "transport_requirements": "Shipped on dry ice to the central laboratory",
        "access_control": "Restricted-access freezers", "chain_of_custody": "Chain-of-custody forms"}},
    "site.ip_storage": {"ip_storage": [{
        "product_name": "Velorastib", "temperature_requirements": "15 to 25 C", "environmental_conditions": "Protect from moisture",
        "storage_location": "Locked pharmacy area", "access_restrictions": "Study pharmacists only",
        "accountability_tracking": "Drug accountability log"}]},
    "soe.schedule_of_events": {"schedule_of_events": visits(SOE_PARTIALS[6] + SOE_PARTIALS[7])},
}

# Elements the mock judge marks below full marks for the demo run.
JUDGE_SCORES = {"gen.allocation": (4, "Submission omits the 2:1 ratio but captures randomization."),
                "ie.washout_period": (4.5, "Matches the reference apart from wording.")}


def category_of(eid):
    return eid.split(".")[0]


def standalone_document(cat):
    vals = {k: v for k, v in VALUES.items() if category_of(k) == cat}
    if cat == "gen":
        gi, oe = {}, {}
        for k, v in vals.items():
            dest = oe if k in ("gen.primary_objectives", "gen.secondary_objectives", "gen.endpoints") else gi
            dest.update(v)
        return {"general_information": gi, "objectives_and_endpoints": oe}
    if cat == "ae":
        groups = {
            "ae_definitions_and_classifications": ["ae_definition", "sae_definition", "severity_grading", "ae_relationship"],
            "reporting_requirements": ["reporting_timeframes", "ae_data_collection_requirements", "reporting_contacts"],
            "safety_monitoring_and_management": ["safety_monitoring_plan", "discontinuation_criteria", "emergency_procedures"],
            "specific_ae_information": ["expected_aes", "potential_risks", "concomitant_medication_restrictions",
                                        "special_population_considerations"],
        }
        return {g: {f: vals["ae." + f][f] for f in fs} for g, fs in groups.items()}
    if cat == "site":
        req = {}
        for k in ("site.equipment", "site.certifications", "site.sample_handling"):
            req.update(vals[k])
        return {"site_requirements": [req], "ip_storage": vals["site.ip_storage"]["ip_storage"]}
    doc = {}
    for v in vals.values():
        doc.update(v)
    return doc


def render_page_image(text, path):
    font = ImageFont.load_default()
    lines = text.rstrip("\n").split("\n")
    img = Image.new("L", (900, 24 + 18 * len(lines)), 255)
    draw = ImageDraw.Draw(img)
    for i, line in enumerate(lines):
        draw.text((12, 12 + 18 * i), line, fill=0, font=font)
    img.save(path, format="PNG", optimize=False)


def dump(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n")


def main():
    if ROOT.exists():
        shutil.rmtree(ROOT)
    pkg = ROOT / "package"
    (pkg / "pages").mkdir(parents=True)
    pages = []
    for i, text in enumerate(PAGES, start=1):
        stem = f"{i:04d}"
        (pkg / "pages" / f"{stem}.txt").write_text(text)
        entry = {"index": i, "text_path": f"pages/{stem}.txt"}
        if i in SOE_PAGES:
            render_page_image(text, pkg / "pages" / f"{stem}.png")
            entry["image_path"] = f"pages/{stem}.png"
        pages.append(entry)
    dump(pkg / "manifest.json", {"doc_id": DOC_ID, "nct_id": NCT, "page_count": len(PAGES),
                                 "source_label": "synthetic demo protocol", "pages": pages})

    fx = ROOT / "fixtures"
    routes = []
    # Judge replies first: the judge prompt also carries "Element: <id>".
    for eid in VALUES:
        score, why = JUDGE_SCORES.get(eid, (5, "Submission contains all reference information."))
        dump(fx / "judge" / f"{eid}.json", {"score": score, "rationale": why})
        routes.append({"contains": ["You compare an extracted", f"Element: {eid} ("], "file": f"judge/{eid}.json"})
    for eid, value in VALUES.items():
        dump(fx / "adjudicate" / f"{eid}.json",
             {"choice": "A", "value": value, "confidence": 60 + (sum(map(ord, eid)) % 40),
              "rationale": "Candidate A matches the protocol text."})
        routes.append({"contains": ["Several annotators", f"Element: {eid} ("], "file": f"adjudicate/{eid}.json"})
    for eid, value in VALUES.items():
        if eid == "soe.schedule_of_events":
            continue
        dump(fx / "rag" / f"{eid}.json", value)
        routes.append({"contains": ["You extract one data element", f"Element: {eid}\n"], "file": f"rag/{eid}.json"})
    dump(fx / "soe" / "pages-6-7.json", {"schedule_of_events": visits(SOE_PARTIALS[6] + SOE_PARTIALS[7])})
    routes.append({"contains": ["Element: soe.schedule_of_events", "protocol pages 6-7 "], "file": "soe/pages-6-7.json"})
    for cat in ("gen", "ie", "ae", "inter", "site", "soe"):
        dump(fx / "standalone" / f"{cat}.json", standalone_document(cat))
        routes.append({"contains": ["You extract structured data", f"Category: {cat}\n"], "file": f"standalone/{cat}.json"})
    dump(fx / "routes.json", routes)

    for eid, value in VALUES.items():
        dump(ROOT / "truth" / f"{eid}.json", value)

    # Three candidate sources: a reference copy and two perturbed model outputs.
    cands = ROOT / "candidates"
    for i, (eid, value) in enumerate(VALUES.items()):
        dump(cands / "annotator" / f"{eid}.json", value)
        a = copy.deepcopy(value)
        if i % 3 == 0:
            key = next(iter(a))
            if isinstance(a[key], str):
                a[key] = a[key] + " (see protocol)"
        dump(cands / "model_a" / f"{eid}.json", a)
        if i % 4 != 1:
            dump(cands / "model_b" / f"{eid}.json", value)

    dump(ROOT / "providers.example.json", {
        "providers": [
            {"provider_id": "generation", "kind": "chat", "model_name": "your-chat-model",
             "endpoint": "https://llm.example.org/v1", "max_context_tokens": 200000, "rate_limit_per_min": 60,
             "retry": {"max_attempts": 4, "backoff_base_ms": 500}},
            {"provider_id": "vision", "kind": "multimodal", "model_name": "your-vision-model",
             "endpoint": "https://llm.example.org/v1", "max_context_tokens": 200000, "rate_limit_per_min": 30,
             "batch_limit": 4, "retry": {"max_attempts": 4, "backoff_base_ms": 500}},
            {"provider_id": "embedding", "kind": "embedding", "model_name": "your-embedding-model",
             "endpoint": "https://llm.example.org/v1", "max_context_tokens": 512, "rate_limit_per_min": 300,
             "retry": {"max_attempts": 4, "backoff_base_ms": 250}},
        ],
        "roles": {"generation": "generation", "multimodal": "vision", "embedding": "embedding",
                  "judge": "generation", "adjudicator": "generation"},
    })


if __name__ == "__main__":
    main()
