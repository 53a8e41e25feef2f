"""The six cognitive layers, highest privilege first."""

from .agent_model import AgentModelLayer
from .aspirational import AspirationalLayer
from .base import Layer
from .cognitive_control import CognitiveControlLayer
from .executive import ExecutiveFunctionLayer
from .global_strategy import GlobalStrategyLayer
from .task_prosecution import TaskProsecutionLayer

__all__ = [
    "AgentModelLayer", "AspirationalLayer", "CognitiveControlLayer", "ExecutiveFunctionLayer",
    "GlobalStrategyLayer", "Layer", "TaskProsecutionLayer",
]
