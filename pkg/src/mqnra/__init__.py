"""mqnra: a workbench for the MQuery document algebra and nested relational
algebra, with evaluators for both languages, a shared type discipline,
translations in both directions, and a differential test harness."""

__version__ = "0.1.0"
