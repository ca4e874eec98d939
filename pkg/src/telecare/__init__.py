"""telecare: remote elderly-monitoring pipeline.

Body-sensor frames flow from a (simulated) wearable through a patient-side
gateway that suppresses unchanged readings, up to a central server that
resolves the patient's place from GSM cell sightings, scores risk with a
logistic-regression model, and raises clinician-steered alerts.
"""

__version__ = "0.1.0"
