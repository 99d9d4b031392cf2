from django.apps import AppConfig


class QaEngineConfig(AppConfig):
    name = "qa_engine"
    verbose_name = "Evidence-supported question answering"
