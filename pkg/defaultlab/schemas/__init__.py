from .experiment import ExperimentConfig, ModelSpec, RunSpec, OutputSpec, TolerancesSpec, Backend, ReportFormat
from .report import RunReport, CheckResult, CheckStatus, ProcessTable, TableRow, PremiumRow, LadderRung, McEstimate
