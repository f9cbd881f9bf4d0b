#include <stdio.h>
#include "gaitbc.h"

int main(void) {
    GbcSim *sim = NULL;
    if (gbc_sim_new(0.6, 0.0, GBC_GAIT_WALK, &sim) != GBC_STATUS_OK) {
        char msg[256];
        gbc_last_error(msg, sizeof msg);
        fprintf(stderr, "gbc_sim_new: %s\n", msg);
        return 1;
    }
    int steps = 0;
    GbcEvents ev;
    for (int k = 0; k < 3000; k++) {
        if (gbc_sim_step_expert(sim, &ev) != GBC_STATUS_OK || ev.failure != GBC_FAILURE_NONE) {
            gbc_sim_free(sim);
            return 2;
        }
        steps += ev.touchdown;
    }
    GbcState st;
    gbc_sim_state(sim, &st);
    printf("steps %d com_x %.3f\n", steps, st.com_pos[0]);
    gbc_sim_free(sim);
    return 0;
}
