from .gateway import ChatGateway, build_backend, build_gateway
from .pipeline import AuditLog, PipelineService, check_pairing

__all__ = ['ChatGateway', 'build_backend', 'build_gateway', 'AuditLog', 'PipelineService', 'check_pairing']
