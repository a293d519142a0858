from . import dataset_commands, motion_commands, scenario_commands

COMMAND_MODULES = (scenario_commands, motion_commands, dataset_commands)
