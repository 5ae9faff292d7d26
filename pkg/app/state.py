"""
全局运行状态管理模块
用于在命令分发与入口之间共享当前运行的组件
"""

# 全局运行状态
run_state = {}

def get_component(component_name: str):
    """获取特定组件"""
    return run_state.get(component_name)

def set_component(component_name: str, component):
    """设置特定组件"""
    run_state[component_name] = component
