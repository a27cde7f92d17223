from .mock import Clock, KernelResult, MockKernel, load_service_times, E

__all__ = ["Clock", "KernelResult", "MockKernel", "load_service_times", "E"]
