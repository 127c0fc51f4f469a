"""Checklist-based compliance auditing for GitHub Actions workflows.

Combines deterministic static analysis with a multi-model judge panel,
tiered adjudication of disagreements (consensus, tie-breaker, human
review), and inter-rater agreement statistics.
"""

from .adjudicate import (AgreementBand, FinalLabel, ItemKey, ReviewQueueEntry,
                         Stage, band_of, decide, progression_snapshot)
from .catalog import (Catalog, Compliance, Criterion, Mode, Polarity, Section,
                      Theme, Verdict, compliance_of, load_catalog, render_question)
from .model import (ActionKind, ActionRef, JobSpec, MalformedYaml, NotAWorkflow,
                    RefKind, StepSpec, WorkflowModel, classify_action_ref,
                    extract_secret_usages, parse_workflow)
from .pipeline import AuditConfig, audit, load_config
from .sampling import filter_repos, sample_size, stratified_sample
from .static_checks import StaticFinding, run_static_suite
from .stats import (RatingMatrix, classification_metrics, cohen_kappa,
                    compute_agreement_report, fleiss_kappa, mcnemar)

__version__ = "0.1.0"
