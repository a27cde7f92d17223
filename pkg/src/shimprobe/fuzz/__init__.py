from .generate import DomainLimits, Strategy, TestCase, generate, resolve_resources
from .plan import CampaignPlan, PlanEntry, load_plan, save_plan
from .resources import MockSandbox, RealSandbox, ResourceSet, census_delta

__all__ = [
    "DomainLimits",
    "Strategy",
    "TestCase",
    "generate",
    "resolve_resources",
    "CampaignPlan",
    "PlanEntry",
    "load_plan",
    "save_plan",
    "MockSandbox",
    "RealSandbox",
    "ResourceSet",
    "census_delta",
]
