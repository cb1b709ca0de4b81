"""Multi-robot scenarios, workflow graphs, tool plans and closed-loop episodes."""

from .actions import FAILURE_TABLE, VERBS, Action, ActionError, action_vocabulary, parse_action, render_action
from .egoplan import EgoPlanItem, gen_egoplan_item, is_progress, state_before
from .items import (
    TEMPORAL_FAMILIES,
    TemporalForgeResult,
    closeloop_item,
    egoplan_qa,
    forge_temporal,
    multirobot_item,
)
from .ota import PlanningError, choose_agent, plan_actions, replay, synthesize_ota
from .scenario import (
    GOAL_SCHEMAS,
    Goal,
    GoalSchema,
    GoalTemplate,
    LocationSpec,
    ObjectSpec,
    RobotSpec,
    ScenarioError,
    ScenarioInstance,
    ScenarioTemplate,
    TaskScene,
    count_task_types,
    goal_predicates,
    instantiate_scenario,
    load_templates,
    parse_goal,
    parse_templates,
    render_goal,
)
from .simulator import (
    Episode,
    Feedback,
    Observation,
    OTAStep,
    PolicyContext,
    ScriptedPolicy,
    WorldState,
    apply_action,
    precondition_error,
    simulate_episode,
)
from .validator import has_cycle, tool_plan_errors, workflow_errors
from .workflow import (
    Subtask,
    ToolCall,
    ToolPlan,
    WorkflowError,
    WorkflowGraph,
    decompose,
    emit_tool_plan,
    replay_tool_plans,
    tool_plan_actions,
)
